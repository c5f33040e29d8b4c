//! Sample model, file formats, class balancing, fold construction and
//! synthetic corpora.

mod jsonl;
mod sidecar;
mod split;
mod synth;
mod types;

pub use jsonl::{
    load_samples, save_raw_samples, save_samples, sidecar_path, EegStorage, LoadOptions, RawWord,
    SidecarRef,
};
pub use sidecar::{Sidecar, MAGIC};
pub use split::{
    downsample_balance, kfold_split, kfold_split_by_sentence, FoldGranularity, FoldSplit,
};
pub use synth::{subject_name, synth_generate, SynthSpec};
pub use types::{Dataset, DatasetHeader, Dims, Label, SampleKey, SentenceRecord, WordSample};

use crate::error::Result;
use crate::features::{normalize_sentence_eye, EYE_DIM};

/// Per-sentence L1 normalisation of each eye-gaze column over valid words.
pub fn normalize_eye(ds: &mut Dataset) -> Result<()> {
    for s in &mut ds.sentences {
        let idx: Vec<usize> = (0..s.words.len()).filter(|&i| !s.words[i].padding).collect();
        let mut rows: Vec<[f64; EYE_DIM]> = idx
            .iter()
            .map(|&i| s.words[i].eye.as_slice().try_into().expect("eye width"))
            .collect();
        normalize_sentence_eye(&mut rows)?;
        for (&i, r) in idx.iter().zip(rows) {
            s.words[i].eye = r.to_vec();
        }
    }
    Ok(())
}
