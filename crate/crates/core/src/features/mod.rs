//! Word-level biomarker features: eye-gaze normalisation, EEG
//! conditional-entropy connectivity, and multi-fixation aggregation.

mod entropy;

pub use entropy::{ce_feature_len, ce_feature_vector, conditional_entropy, entropy};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Number of eye-gaze features per word.
pub const EYE_DIM: usize = 12;

/// Default histogram bin count for the entropy estimator.
pub const DEFAULT_BINS: usize = 16;

/// The twelve eye-gaze features, in their fixed serialisation order.
///
/// Durations are milliseconds, pupil sizes are in recorder units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EyeGazeFeatures {
    pub n_fixations: f64,
    pub mean_pupil_size: f64,
    pub ffd: f64,
    pub trt: f64,
    pub gd: f64,
    pub gpt: f64,
    pub sfd: f64,
    pub pupil_ffd: f64,
    pub pupil_trt: f64,
    pub pupil_gd: f64,
    pub pupil_gpt: f64,
    pub pupil_sfd: f64,
}

impl EyeGazeFeatures {
    pub const NAMES: [&'static str; EYE_DIM] = [
        "n_fixations",
        "mean_pupil_size",
        "ffd",
        "trt",
        "gd",
        "gpt",
        "sfd",
        "pupil_ffd",
        "pupil_trt",
        "pupil_gd",
        "pupil_gpt",
        "pupil_sfd",
    ];

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let v: [f64; EYE_DIM] = values.try_into().map_err(|_| {
            Error::schema(format!(
                "eye: expected {EYE_DIM} features, got {}",
                values.len()
            ))
        })?;
        if let Some(i) = v.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::contract(format!(
                "eye feature '{}' must be finite and non-negative, got {}",
                Self::NAMES[i],
                v[i]
            )));
        }
        Ok(EyeGazeFeatures {
            n_fixations: v[0],
            mean_pupil_size: v[1],
            ffd: v[2],
            trt: v[3],
            gd: v[4],
            gpt: v[5],
            sfd: v[6],
            pupil_ffd: v[7],
            pupil_trt: v[8],
            pupil_gd: v[9],
            pupil_gpt: v[10],
            pupil_sfd: v[11],
        })
    }

    pub fn to_array(&self) -> [f64; EYE_DIM] {
        [
            self.n_fixations,
            self.mean_pupil_size,
            self.ffd,
            self.trt,
            self.gd,
            self.gpt,
            self.sfd,
            self.pupil_ffd,
            self.pupil_trt,
            self.pupil_gd,
            self.pupil_gpt,
            self.pupil_sfd,
        ]
    }
}

/// One channels × samples EEG segment.
#[derive(Clone, Debug, PartialEq)]
pub struct EegEpoch {
    data: Vec<f64>,
    channel_count: usize,
    sample_count: usize,
}

impl EegEpoch {
    /// `data` is channel-major: channel `c` occupies
    /// `data[c * samples..(c + 1) * samples]`.
    pub fn new(data: Vec<f64>, channel_count: usize, sample_count: usize) -> Result<Self> {
        if channel_count < 2 || sample_count < 2 {
            return Err(Error::contract(format!(
                "EEG epoch needs at least 2 channels and 2 samples, got {channel_count}x{sample_count}"
            )));
        }
        if data.len() != channel_count * sample_count {
            return Err(Error::Shape {
                op: "EegEpoch::new",
                left: vec![channel_count, sample_count],
                right: vec![data.len()],
            });
        }
        Ok(EegEpoch {
            data,
            channel_count,
            sample_count,
        })
    }

    pub fn from_channels(channels: &[Vec<f64>]) -> Result<Self> {
        let t = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != t) {
            return Err(Error::contract("EEG channels differ in length"));
        }
        EegEpoch::new(channels.concat(), channels.len(), t)
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.sample_count..(c + 1) * self.sample_count]
    }
}

/// Flattened upper triangle of the pairwise conditional-entropy matrix, in bits.
#[derive(Clone, Debug, PartialEq)]
pub struct CeFeatureVector {
    pub values: Vec<f64>,
    pub source_channels: usize,
    pub bins: usize,
}

/// Biomarker vectors for one word.
#[derive(Clone, Debug, PartialEq)]
pub struct WordBiomarkers {
    pub eye: [f64; EYE_DIM],
    pub eeg: Vec<f64>,
    pub fixation_count: usize,
}

impl WordBiomarkers {
    /// Combines per-fixation EEG feature vectors; a word without fixations
    /// gets all-zero eye and EEG vectors.
    pub fn from_fixations(eye: [f64; EYE_DIM], fixations: &[Vec<f64>], eeg_len: usize) -> Result<Self> {
        if fixations.is_empty() {
            return Ok(WordBiomarkers {
                eye: [0.0; EYE_DIM],
                eeg: vec![0.0; eeg_len],
                fixation_count: 0,
            });
        }
        Ok(WordBiomarkers {
            eye,
            eeg: aggregate_fixations(fixations, eeg_len)?,
            fixation_count: fixations.len(),
        })
    }
}

/// Divides a non-negative column by its sum. An all-zero column is returned
/// unchanged.
pub fn l1_normalize_per_sentence(column: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = column.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::contract(format!(
            "L1 normalisation needs non-negative entries, got {v}"
        )));
    }
    let sum: f64 = column.iter().sum();
    if sum == 0.0 {
        return Ok(column.to_vec());
    }
    Ok(column.iter().map(|v| v / sum).collect())
}

/// Applies [`l1_normalize_per_sentence`] to each of the twelve eye-feature
/// columns of one sentence.
pub fn normalize_sentence_eye(rows: &mut [[f64; EYE_DIM]]) -> Result<()> {
    for f in 0..EYE_DIM {
        let column: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        let normed = l1_normalize_per_sentence(&column)?;
        for (r, v) in rows.iter_mut().zip(normed) {
            r[f] = v;
        }
    }
    Ok(())
}

/// Scales each vector to unit L2 norm and sums them. Zero vectors stay zero;
/// an empty list yields a zero vector of length `len`.
pub fn aggregate_fixations(vectors: &[Vec<f64>], len: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; len];
    for v in vectors {
        if v.len() != len {
            return Err(Error::Shape {
                op: "aggregate_fixations",
                left: vec![len],
                right: vec![v.len()],
            });
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().zip(v).for_each(|(o, x)| *o += x / norm);
        }
    }
    Ok(out)
}
