#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod error;
pub mod features;
pub mod fsutil;
pub mod harness;
pub mod model;
pub mod numcore;

pub use error::{Error, Result};
pub use numcore::{ParamId, ParamStore, Tape, Tensor, Var};
