use crate::args::CommonArgs;
use crate::UsageError;
use reademb::dataio::LoadOptions;
use reademb::features::DEFAULT_BINS;
use reademb::harness::TrainConfig;
use reademb::model::Normalizer;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Settings of one run: built-in defaults, then the config file, then flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Thread count does not change results, so it is left out of outputs.
    #[serde(skip_serializing)]
    pub jobs: Option<usize>,
    pub bins: usize,
    pub mask_zero_fixation: bool,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            jobs: None,
            bins: DEFAULT_BINS,
            mask_zero_fixation: false,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    pub fn resolve(common: &CommonArgs) -> anyhow::Result<Self> {
        let mut cfg = match &common.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(common);
        cfg.train
            .validate()
            .map_err(|e| UsageError(format!("invalid settings: {e}")))?;
        if cfg.bins < 2 {
            return Err(UsageError("bins must be at least 2".into()).into());
        }
        Ok(cfg)
    }

    fn apply(&mut self, c: &CommonArgs) {
        let t = &mut self.train;
        if let Some(v) = c.jobs {
            self.jobs = Some(v);
        }
        if let Some(v) = c.bins {
            self.bins = v;
        }
        if c.mask_zero_fixation {
            self.mask_zero_fixation = true;
        }
        if let Some(v) = c.seed {
            t.seed = v;
        }
        if let Some(v) = &c.modalities {
            t.model.modalities = v.0.clone();
        }
        if let Some(v) = c.folds {
            t.folds = v;
        }
        if let Some(v) = c.lr {
            t.lr = v;
        }
        if let Some(v) = c.epochs {
            t.epochs = v;
        }
        if let Some(v) = c.lambda1 {
            t.loss.weights.bce = v;
        }
        if let Some(v) = c.lambda2 {
            t.loss.weights.mse = v;
        }
        if let Some(v) = c.lambda3 {
            t.loss.weights.f1 = v;
        }
        if c.standard_f1 {
            t.loss.standard_f1 = true;
        }
        if c.literal_n {
            t.loss.normalizer = Normalizer::Literal;
        }
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            bins: self.bins,
            mask_zero_fixation: self.mask_zero_fixation,
            require_raw: false,
        }
    }
}
