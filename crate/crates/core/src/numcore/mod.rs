//! Dense `f64` tensors with a dynamic reverse-mode tape.
//!
//! Eager functions ([`matmul`], [`softmax_rows`], [`layer_norm`]) compute
//! values only; the same kernels back the differentiable versions on
//! [`Tape`]. Training flows through [`backward`] and [`sgd_step`].

pub(crate) mod kernels;
mod tape;
mod tensor;

pub use tape::{Gradients, ParamId, ParamStore, Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};
use rand::Rng;

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    kernels::gemm(m, k, n, a.data(), false, b.data(), false, 0.0, &mut out);
    Tensor::new(vec![m, n], out)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = vec![0.0; x.numel()];
    kernels::softmax_rows(x.data(), x.cols(), &mut out);
    Tensor::new(x.shape().to_vec(), out).expect("same shape")
}

pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (xv, gv, bv) = (
        tape.constant(x.clone()),
        tape.constant(gain.clone()),
        tape.constant(bias.clone()),
    );
    let y = tape.layer_norm(xv, gv, bv, eps)?;
    Ok(tape.value(y).clone())
}

/// Runs the reverse sweep and stores the gradients on the parameters.
pub fn backward(tape: Tape<'_>, loss: Var, params: &mut ParamStore) -> Result<()> {
    let grads = tape.backward(loss)?;
    params.absorb(&grads);
    Ok(())
}

/// Plain SGD: `p ← p − lr·∇p`, then clears every gradient.
pub fn sgd_step(params: &mut ParamStore, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::contract(format!("learning rate must be positive, got {lr}")));
    }
    if let Some(id) = params
        .ids()
        .find(|&id| params.get(id).requires_grad() && params.get(id).grad().is_none())
    {
        return Err(Error::contract(format!(
            "parameter '{}' has no gradient",
            params.name(id)
        )));
    }
    for id in params.ids().collect::<Vec<_>>() {
        let t = params.get_mut(id);
        if !t.requires_grad() {
            continue;
        }
        let g = t.take_grad().expect("checked above");
        t.data_mut().iter_mut().zip(&g).for_each(|(p, g)| *p -= lr * g);
        if !t.all_finite() {
            return Err(Error::Numeric(format!(
                "parameter '{}' became non-finite",
                params.name(id)
            )));
        }
    }
    Ok(())
}

/// SGD driven directly by the output of [`Tape::backward`], skipping the
/// gradient buffers on the parameters. Parameters absent from `grads` are
/// left untouched.
pub fn sgd_apply(params: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::contract(format!("learning rate must be positive, got {lr}")));
    }
    for (id, g) in grads.iter() {
        let t = params.get_mut(id);
        if !t.requires_grad() {
            continue;
        }
        t.data_mut().iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
        if !t.all_finite() {
            return Err(Error::Numeric(format!(
                "parameter '{}' became non-finite",
                params.name(id)
            )));
        }
    }
    Ok(())
}

/// Glorot/Xavier uniform initialisation for a `fan_in × fan_out` weight.
pub fn xavier_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("positive dims")
}
