use super::types::{Dataset, DatasetHeader, Dims, Label, SentenceRecord, WordSample};
use crate::error::{Error, Result};
use crate::features::EYE_DIM;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Two Gaussian classes per modality: HRW centred at `+Δ/2·e`, LRW at
/// `−Δ/2·e` for a random unit direction `e`, with unit isotropic noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub subjects: usize,
    pub n_sentences: usize,
    pub words_per_sentence: usize,
    /// Class separation in noise standard deviations.
    pub delta: f64,
    pub eeg_dim: usize,
    /// Word-embedding width; `None` leaves the modality out.
    pub wemb_dim: Option<usize>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            subjects: 1,
            n_sentences: 100,
            words_per_sentence: 10,
            delta: 2.0,
            eeg_dim: 5460,
            wemb_dim: None,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::contract(format!("delta must be >= 0, got {}", self.delta)));
        }
        if self.subjects == 0 || self.n_sentences == 0 || self.words_per_sentence == 0 || self.eeg_dim == 0 {
            return Err(Error::contract("synthetic counts and dimensions must be positive"));
        }
        if self.wemb_dim == Some(0) {
            return Err(Error::contract("wemb dimension must be positive"));
        }
        Ok(())
    }
}

fn unit_direction(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn draw(center: &[f64], sign: f64, half: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    center
        .iter()
        .map(|&e| sign * half * e + rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn subject_name(i: usize) -> String {
    format!("S{:02}", i + 1)
}

pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let eye_dir = unit_direction(EYE_DIM, &mut rng);
    let eeg_dir = unit_direction(spec.eeg_dim, &mut rng);
    let wemb_dir = spec.wemb_dim.map(|d| unit_direction(d, &mut rng));
    let half = spec.delta / 2.0;
    let n = spec.words_per_sentence;

    let mut sentences = Vec::with_capacity(spec.subjects * spec.n_sentences);
    for s in 0..spec.subjects {
        let subject = subject_name(s);
        for sid in 0..spec.n_sentences {
            let hrw = n / 2 + usize::from(n % 2 == 1 && rng.random_bool(0.5));
            let mut labels: Vec<Label> = (0..n)
                .map(|i| if i < hrw { Label::Hrw } else { Label::Lrw })
                .collect();
            labels.shuffle(&mut rng);
            let words = labels
                .into_iter()
                .enumerate()
                .map(|(wi, label)| {
                    let sign = if label == Label::Hrw { 1.0 } else { -1.0 };
                    WordSample {
                        subject: subject.clone(),
                        sentence_id: sid as u32,
                        word_index: wi as u32,
                        token: format!("w{wi}"),
                        label: Some(label),
                        valid: true,
                        padding: false,
                        eye: draw(&eye_dir, sign, half, &mut rng),
                        eeg: draw(&eeg_dir, sign, half, &mut rng),
                        wemb: wemb_dir.as_ref().map(|d| draw(d, sign, half, &mut rng)),
                    }
                })
                .collect();
            sentences.push(SentenceRecord {
                subject: subject.clone(),
                sentence_id: sid as u32,
                words,
            });
        }
    }
    Ok(Dataset {
        sentences,
        dims: Dims {
            eye: EYE_DIM,
            eeg: spec.eeg_dim,
            wemb: spec.wemb_dim,
        },
        header: DatasetHeader::default(),
    })
}
