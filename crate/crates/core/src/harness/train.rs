use super::config::TrainConfig;
use super::metrics::Evaluation;
use crate::dataio::{Dataset, WordSample};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Modality, ReadingModel, SentenceBatch};
use crate::numcore::{sgd_apply, Tape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sentence loss of each completed epoch.
    pub loss_trace: Vec<f64>,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.loss_trace.len()
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Model configuration with input widths taken from the dataset.
pub fn model_config_for(ds: &Dataset, base: &ModelConfig, seed: u64) -> Result<ModelConfig> {
    let mut cfg = base.clone();
    cfg.eye_dim = ds.dims.eye;
    cfg.eeg_dim = ds.dims.eeg;
    cfg.wemb_dim = match (ds.dims.wemb, cfg.modalities.contains(&Modality::Wemb)) {
        (Some(d), _) => d,
        (None, true) => return Err(Error::schema("wemb modality requested but the dataset has no wemb vectors")),
        (None, false) => 0,
    };
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

/// One batch per sentence scoring the words in `include`. Sentences without
/// such words are dropped.
pub fn sentence_batches(
    ds: &Dataset,
    modalities: &[Modality],
    include: impl Fn(&WordSample) -> bool,
) -> Result<Vec<SentenceBatch>> {
    let scored = |w: &WordSample| w.valid && w.label.is_some() && include(w);
    let mut out = Vec::new();
    for s in &ds.sentences {
        if s.words.iter().any(scored) {
            out.push(SentenceBatch::from_record(s, modalities, scored)?);
        }
    }
    Ok(out)
}

/// Per-sentence SGD. Each epoch visits the sentences in a freshly shuffled
/// order drawn from `cfg.seed`.
pub fn train(model: &mut ReadingModel, batches: &[SentenceBatch], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let mut order: Vec<usize> = (0..batches.len())
        .filter(|&i| batches[i].loss_mask.iter().any(|&m| m))
        .collect();
    if order.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = TrainReport { loss_trace: Vec::with_capacity(cfg.epochs), stopped_early: false };
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let grads = {
                let mut tape = Tape::new();
                let (loss, _) = model.loss(&mut tape, &batches[i], &cfg.loss)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::Numeric(format!("loss diverged to {value} in epoch {epoch}")));
                }
                total += value;
                tape.backward(loss)?
            };
            sgd_apply(model.params_mut(), &grads, cfg.lr).map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("{msg} in epoch {epoch}")),
                other => other,
            })?;
        }
        report.loss_trace.push(total / order.len() as f64);
        if plateaued(&report.loss_trace, cfg.patience, cfg.tol) {
            report.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    Ok(report)
}

fn plateaued(trace: &[f64], patience: usize, tol: f64) -> bool {
    if patience == 0 || trace.len() <= patience {
        return false;
    }
    let now = trace[trace.len() - 1];
    let then = trace[trace.len() - 1 - patience];
    (then - now).abs() <= tol * then.abs().max(f64::MIN_POSITIVE)
}

/// Scores every word selected by the batches' loss masks.
pub fn evaluate(model: &ReadingModel, batches: &[SentenceBatch]) -> Result<Evaluation> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for b in batches {
        if !b.loss_mask.iter().any(|&m| m) {
            continue;
        }
        let pred = model.predict(b)?;
        for ((&p, &m), &y) in pred.p.iter().zip(&pred.mask).zip(&pred.y) {
            if m {
                scores.push(p);
                labels.push(y == 1.0);
            }
        }
    }
    Evaluation::from_scores(scores, labels)
}
