//! Training, cross-validation, metrics and embedding export.

mod config;
mod cv;
mod export;
mod metrics;
mod train;

pub use config::TrainConfig;
pub use cv::{
    cross_validate, cross_validate_subject, cross_validate_subject_models, derive_seed, evaluate_dataset, fit, select_words,
    FoldMetrics, MetricsReport, SubjectReport,
};
pub use export::{
    encoder_outputs, export_embeddings, manifest_path, EmbeddingManifest, EmbeddingRow,
    EMBEDDING_FORMAT,
};
pub use metrics::{roc_auc, Confusion, Evaluation, RocPoint, DECISION_THRESHOLD};
pub use train::{evaluate, model_config_for, sentence_batches, train, TrainReport};
