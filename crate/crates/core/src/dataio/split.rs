use super::types::{Label, SampleKey};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Keeps every sample of the minority class and a seeded uniform subset of
/// the majority class of equal size. Output preserves input order.
pub fn downsample_balance<T: Clone>(
    items: &[T],
    label_of: impl Fn(&T) -> Label,
    seed: u64,
) -> Result<Vec<T>> {
    let (hrw, lrw): (Vec<usize>, Vec<usize>) =
        (0..items.len()).partition(|&i| label_of(&items[i]) == Label::Hrw);
    if hrw.is_empty() {
        return Err(Error::contract("class balancing needs at least one HRW sample"));
    }
    if lrw.is_empty() {
        return Err(Error::contract("class balancing needs at least one LRW sample"));
    }
    let (keep_all, majority) = if lrw.len() >= hrw.len() { (hrw, lrw) } else { (lrw, hrw) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, majority.len(), keep_all.len());
    let mut selected: Vec<usize> = keep_all;
    selected.extend(picked.iter().map(|i| majority[i]));
    selected.sort_unstable();
    Ok(selected.into_iter().map(|i| items[i].clone()).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldGranularity {
    /// Folds are drawn over individual words.
    #[default]
    Word,
    /// All words of a sentence share a fold.
    Sentence,
}

/// Assignment of every sample to one of `fold_count` disjoint folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold_count: usize,
    pub assignments: BTreeMap<SampleKey, usize>,
}

impl FoldSplit {
    pub fn fold_of(&self, key: &SampleKey) -> Option<usize> {
        self.assignments.get(key).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.fold_count];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn test_keys(&self, fold: usize) -> Vec<SampleKey> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(k, _)| *k)
            .collect()
    }

    pub fn train_keys(&self, fold: usize) -> Vec<SampleKey> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f != fold)
            .map(|(k, _)| *k)
            .collect()
    }
}

/// Seeded shuffle of `n` positions split into `k` contiguous runs whose sizes
/// differ by at most one (the first `n % k` runs are larger).
fn partition(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::contract(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::contract(format!("{n} samples cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut fold_of = vec![0; n];
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &i in &order[pos..pos + size] {
            fold_of[i] = f;
        }
        pos += size;
    }
    Ok(fold_of)
}

/// Assigns folds after sorting keys canonically, so the result depends only
/// on the key set, `k` and `seed`.
pub fn kfold_split(keys: &[SampleKey], k: usize, seed: u64) -> Result<FoldSplit> {
    let mut sorted = keys.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let folds = partition(sorted.len(), k, seed)?;
    Ok(FoldSplit {
        fold_count: k,
        assignments: sorted.into_iter().zip(folds).collect(),
    })
}

/// Like [`kfold_split`] but whole sentences are assigned to folds.
pub fn kfold_split_by_sentence(keys: &[SampleKey], k: usize, seed: u64) -> Result<FoldSplit> {
    let mut sentences: Vec<u32> = keys.iter().map(|k| k.sentence).collect();
    sentences.sort_unstable();
    sentences.dedup();
    let folds = partition(sentences.len(), k, seed)?;
    let by_sentence: BTreeMap<u32, usize> = sentences.into_iter().zip(folds).collect();
    Ok(FoldSplit {
        fold_count: k,
        assignments: keys.iter().map(|key| (*key, by_sentence[&key.sentence])).collect(),
    })
}
