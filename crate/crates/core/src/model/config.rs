use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// An input feature stream of a word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Eye,
    Eeg,
    Wemb,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Eye => "eye",
            Modality::Eeg => "eeg",
            Modality::Wemb => "wemb",
        }
    }

    /// Parses a comma-separated list such as `eeg,eye`, returning the set
    /// in canonical order.
    pub fn parse_list(s: &str) -> Result<Vec<Modality>> {
        let mut out = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Modality>>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::contract("at least one modality is required"));
        }
        Ok(out)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eye" => Ok(Modality::Eye),
            "eeg" => Ok(Modality::Eeg),
            "wemb" => Ok(Modality::Wemb),
            other => Err(Error::contract(format!(
                "unknown modality '{other}' (expected eye, eeg or wemb)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub mlp_hidden: Vec<usize>,
    pub use_layer_norm: bool,
    pub use_residual: bool,
    pub ln_eps: f64,
    pub modalities: Vec<Modality>,
    pub eye_dim: usize,
    pub eeg_dim: usize,
    pub wemb_dim: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 128,
            n_heads: 4,
            ffn_dim: 256,
            mlp_hidden: vec![64],
            use_layer_norm: true,
            use_residual: true,
            ln_eps: 1e-5,
            modalities: vec![Modality::Eye, Modality::Eeg],
            eye_dim: 12,
            eeg_dim: 5460,
            wemb_dim: 768,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn input_dim(&self, m: Modality) -> usize {
        match m {
            Modality::Eye => self.eye_dim,
            Modality::Eeg => self.eeg_dim,
            Modality::Wemb => self.wemb_dim,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::contract(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !self.d_model.is_multiple_of(2) {
            return Err(Error::contract("d_model must be even for sinusoidal encoding"));
        }
        if self.ffn_dim == 0 || self.mlp_hidden.contains(&0) {
            return Err(Error::contract("hidden widths must be positive"));
        }
        if self.modalities.is_empty() {
            return Err(Error::contract("at least one modality is required"));
        }
        if let Some(m) = self.modalities.iter().find(|&&m| self.input_dim(m) == 0) {
            return Err(Error::contract(format!("modality {m} has zero input width")));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::contract("ln_eps must be positive"));
        }
        Ok(())
    }
}

/// Weights of the three loss terms (BCE, MSE, soft F1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub bce: f64,
    pub mse: f64,
    pub f1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            bce: 1.0,
            mse: 1.0,
            f1: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(bce: f64, mse: f64, f1: f64) -> Result<Self> {
        let w = LossWeights { bce, mse, f1 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.bce, self.mse, self.f1];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::contract("loss weights must be finite and non-negative"));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::contract("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

/// Divisor of the mean-type loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalizer {
    /// Number of unmasked entries.
    #[default]
    Valid,
    /// Total entry count including masked ones.
    Literal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub normalizer: Normalizer,
    /// Use `2·Σyp` as the soft-F1 numerator instead of `Σyp`.
    pub standard_f1: bool,
}
