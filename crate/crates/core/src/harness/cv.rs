use super::config::TrainConfig;
use super::metrics::{roc_auc, Confusion, Evaluation, RocPoint};
use super::train::{evaluate, model_config_for, sentence_batches, train, TrainReport};
use crate::dataio::{
    downsample_balance, kfold_split, kfold_split_by_sentence, Dataset, FoldGranularity, Label, SampleKey,
};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::model::{ModelConfig, ReadingModel};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub epochs_run: usize,
    pub final_loss: f64,
    pub accuracy: f64,
    pub auc: f64,
    pub confusion: Confusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject: String,
    pub folds: Vec<FoldMetrics>,
    pub mean_accuracy: f64,
    /// Mean of the per-fold AUCs.
    pub mean_auc: f64,
    /// Confusion counts summed over folds.
    pub confusion: Confusion,
    /// ROC of the pooled test scores of every fold.
    pub roc: Vec<RocPoint>,
    pub pooled_auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub subjects: Vec<SubjectReport>,
    /// Unweighted mean of the subject mean accuracies.
    pub mean_accuracy: f64,
    pub mean_auc: f64,
    pub test_samples: usize,
}

impl MetricsReport {
    pub fn from_subjects(subjects: Vec<SubjectReport>) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::contract("no subjects to report"));
        }
        let n = subjects.len() as f64;
        Ok(MetricsReport {
            mean_accuracy: subjects.iter().map(|s| s.mean_accuracy).sum::<f64>() / n,
            mean_auc: subjects.iter().map(|s| s.mean_auc).sum::<f64>() / n,
            test_samples: subjects.iter().map(|s| s.confusion.total()).sum(),
            subjects,
        })
    }

    /// `subject,threshold,fpr,tpr` rows; the origin point has threshold `inf`.
    pub fn roc_csv(&self) -> String {
        let mut out = String::from("subject,threshold,fpr,tpr\n");
        for s in &self.subjects {
            for p in &s.roc {
                let t = p.threshold.map_or_else(|| "inf".to_string(), |t| t.to_string());
                out.push_str(&format!("{},{t},{},{}\n", s.subject, p.fpr, p.tpr));
            }
        }
        out
    }

    pub fn write_roc_csv(&self, path: &Path) -> Result<()> {
        let csv = self.roc_csv();
        write_atomic(path, |w| w.write_all(csv.as_bytes()))
    }
}

/// Seed of one fold's private random stream.
pub fn derive_seed(base: u64, subject: &str, fold: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((subject.len() as u64).to_le_bytes());
    h.update(subject.as_bytes());
    h.update((fold as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Seeds drawn from one fold stream, in a fixed order.
struct FoldSeeds {
    train_balance: u64,
    test_balance: u64,
    init: u64,
    shuffle: u64,
}

impl FoldSeeds {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FoldSeeds {
            train_balance: rng.next_u64(),
            test_balance: rng.next_u64(),
            init: rng.next_u64(),
            shuffle: rng.next_u64(),
        }
    }
}

fn labelled_keys(ds: &Dataset) -> Vec<(SampleKey, Label)> {
    ds.words()
        .filter(|w| w.valid)
        .filter_map(|w| w.label.map(|l| (w.key(), l)))
        .collect()
}

fn select(
    keys: Vec<SampleKey>,
    labels: &std::collections::BTreeMap<SampleKey, Label>,
    balance: bool,
    seed: u64,
) -> Result<BTreeSet<SampleKey>> {
    let set = if balance {
        downsample_balance(&keys, |k| labels[k], seed)?
    } else {
        keys
    };
    Ok(set.into_iter().collect())
}

/// Labelled valid words of every subject, downsampled to equal class sizes
/// when `balance` is set.
pub fn select_words(ds: &Dataset, balance: bool, seed: u64) -> Result<BTreeSet<(String, SampleKey)>> {
    let words: Vec<(String, SampleKey, Label)> = ds
        .words()
        .filter(|w| w.valid)
        .filter_map(|w| w.label.map(|l| (w.subject.clone(), w.key(), l)))
        .collect();
    let words = if balance {
        downsample_balance(&words, |w| w.2, seed)?
    } else {
        words
    };
    Ok(words.into_iter().map(|(s, k, _)| (s, k)).collect())
}

/// Trains one fresh model on every labelled word of `ds`.
pub fn fit(ds: &Dataset, cfg: &TrainConfig) -> Result<(ReadingModel, TrainReport)> {
    cfg.validate()?;
    let mut ds = ds.clone();
    ds.canonicalize();
    let seeds = FoldSeeds::new(cfg.seed);
    let include = select_words(&ds, cfg.balance_train, seeds.train_balance)?;
    let model_cfg = model_config_for(&ds, &cfg.model, seeds.init)?;
    let batches = sentence_batches(&ds, &model_cfg.modalities, |w| {
        include.contains(&(w.subject.clone(), w.key()))
    })?;
    let mut model = ReadingModel::new(model_cfg)?;
    let report = train(&mut model, &batches, &TrainConfig { seed: seeds.shuffle, ..cfg.clone() })?;
    Ok((model, report))
}

/// Scores a trained model on every labelled word of `ds`.
pub fn evaluate_dataset(model: &ReadingModel, ds: &Dataset, balance: bool, seed: u64) -> Result<Evaluation> {
    let mut ds = ds.clone();
    ds.canonicalize();
    let include = select_words(&ds, balance, FoldSeeds::new(seed).test_balance)?;
    let batches = sentence_batches(&ds, &model.config().modalities, |w| {
        include.contains(&(w.subject.clone(), w.key()))
    })?;
    evaluate(model, &batches)
}

/// K-fold cross-validation over the words of a single subject.
pub fn cross_validate_subject(ds: &Dataset, cfg: &TrainConfig) -> Result<SubjectReport> {
    cross_validate_subject_models(ds, cfg).map(|(report, _)| report)
}

/// Like [`cross_validate_subject`], also returning the trained fold models.
pub fn cross_validate_subject_models(ds: &Dataset, cfg: &TrainConfig) -> Result<(SubjectReport, Vec<ReadingModel>)> {
    cfg.validate()?;
    let subjects = ds.subjects();
    let [subject] = subjects.as_slice() else {
        return Err(Error::contract(format!(
            "expected one subject, found {}",
            subjects.len()
        )));
    };
    let mut ds = ds.clone();
    ds.canonicalize();
    let labelled = labelled_keys(&ds);
    let labels: std::collections::BTreeMap<SampleKey, Label> = labelled.iter().copied().collect();
    let keys: Vec<SampleKey> = labelled.iter().map(|(k, _)| *k).collect();
    let split = match cfg.granularity {
        FoldGranularity::Word => kfold_split(&keys, cfg.folds, cfg.seed)?,
        FoldGranularity::Sentence => kfold_split_by_sentence(&keys, cfg.folds, cfg.seed)?,
    };
    let model_cfg = model_config_for(&ds, &cfg.model, 0)?;

    let run_fold = |fold: usize| -> Result<(FoldMetrics, Evaluation, ReadingModel)> {
        let seed = derive_seed(cfg.seed, subject, fold);
        let seeds = FoldSeeds::new(seed);
        let train_set = select(split.train_keys(fold), &labels, cfg.balance_train, seeds.train_balance)?;
        let test_set = select(split.test_keys(fold), &labels, cfg.balance_test, seeds.test_balance)?;
        let mods = &model_cfg.modalities;
        let train_batches = sentence_batches(&ds, mods, |w| train_set.contains(&w.key()))?;
        let test_batches = sentence_batches(&ds, mods, |w| test_set.contains(&w.key()))?;

        let mut model = ReadingModel::new(ModelConfig { seed: seeds.init, ..model_cfg.clone() })?;
        let fold_cfg = TrainConfig { seed: seeds.shuffle, ..cfg.clone() };
        let trace = train(&mut model, &train_batches, &fold_cfg)?;
        let eval = evaluate(&model, &test_batches)?;
        let (_, auc) = eval.roc_auc()?;
        let metrics = FoldMetrics {
            fold,
            seed,
            train_size: train_set.len(),
            test_size: test_set.len(),
            epochs_run: trace.epochs_run(),
            final_loss: trace.final_loss(),
            accuracy: eval.accuracy(),
            auc,
            confusion: eval.confusion,
        };
        Ok((metrics, eval, model))
    };
    let results: Vec<(FoldMetrics, Evaluation, ReadingModel)> =
        (0..cfg.folds).into_par_iter().map(run_fold).collect::<Result<_>>()?;

    let k = results.len() as f64;
    let mut scores = Vec::new();
    let mut pooled_labels = Vec::new();
    let mut confusion = Confusion::default();
    for (m, e, _) in &results {
        scores.extend_from_slice(&e.scores);
        pooled_labels.extend_from_slice(&e.labels);
        confusion = confusion.merge(&m.confusion);
    }
    let (roc, pooled_auc) = roc_auc(&scores, &pooled_labels)?;
    let (folds, models): (Vec<FoldMetrics>, Vec<ReadingModel>) =
        results.into_iter().map(|(m, _, model)| (m, model)).unzip();
    let report = SubjectReport {
        subject: subject.clone(),
        mean_accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / k,
        mean_auc: folds.iter().map(|f| f.auc).sum::<f64>() / k,
        folds,
        confusion,
        roc,
        pooled_auc,
    };
    Ok((report, models))
}

/// Runs [`cross_validate_subject`] for every subject in turn.
pub fn cross_validate(ds: &Dataset, cfg: &TrainConfig) -> Result<MetricsReport> {
    let reports = ds
        .subjects()
        .iter()
        .map(|s| cross_validate_subject(&ds.for_subject(s), cfg))
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_subjects(reports)
}
