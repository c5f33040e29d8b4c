//! The reading-embedding classifier and its training objective.

mod checkpoint;
mod config;
mod loss;
mod network;

pub use checkpoint::{load_checkpoint, payload_path, save_checkpoint, sha256_hex, CheckpointHeader, ParamEntry};
pub use config::{LossConfig, LossWeights, ModelConfig, Modality, Normalizer};
pub use loss::{
    loss_bce, loss_mse, loss_softf1, masked_bce, masked_mse, masked_soft_f1, masked_total,
    total_loss, F1_EPS, PROB_CLAMP,
};
pub use network::{
    fuse, positional_encoding, BatchPrediction, EncoderTrace, ForwardTrace, Linear, ReadingModel,
    SentenceBatch, HEAD_CLAMP, MASK_LOGIT,
};

#[cfg(test)]
mod tests;
