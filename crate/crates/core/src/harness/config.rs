use crate::dataio::FoldGranularity;
use crate::error::{Error, Result};
use crate::model::{LossConfig, ModelConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Upper bound on passes over the training sentences.
    pub epochs: usize,
    /// Training stops once the epoch loss changed by less than `tol`
    /// (relative) over the last `patience` epochs. Zero disables the check.
    pub patience: usize,
    pub tol: f64,
    pub seed: u64,
    pub folds: usize,
    pub granularity: FoldGranularity,
    pub balance_train: bool,
    pub balance_test: bool,
    pub loss: LossConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.05,
            epochs: 50,
            patience: 5,
            tol: 1e-5,
            seed: 0,
            folds: 5,
            granularity: FoldGranularity::Word,
            balance_train: true,
            balance_test: true,
            loss: LossConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::contract(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::contract("epochs must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::contract("early-stop tolerance must be non-negative"));
        }
        if self.folds < 2 {
            return Err(Error::contract(format!("need at least 2 folds, got {}", self.folds)));
        }
        self.loss.weights.validate()
    }
}
