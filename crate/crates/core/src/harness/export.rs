use crate::dataio::{Dataset, Label, Sidecar};
use crate::error::Result;
use crate::fsutil::write_atomic;
use crate::model::{ReadingModel, SentenceBatch};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const EMBEDDING_FORMAT: &str = "reademb-embeddings/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub subject: String,
    pub sentence_id: u32,
    pub word_index: u32,
    pub token: String,
    pub label: Option<Label>,
}

/// Label manifest written next to the embedding sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub format: String,
    pub sidecar: String,
    pub rows: usize,
    pub dim: usize,
    pub words: Vec<EmbeddingRow>,
}

pub fn manifest_path(sidecar: &Path) -> PathBuf {
    sidecar.with_extension("json")
}

/// Encoder outputs `[valid words × d_model]` in canonical word order.
pub fn encoder_outputs(model: &ReadingModel, ds: &Dataset) -> Result<(Sidecar, Vec<EmbeddingRow>)> {
    let mut ds = ds.clone();
    ds.canonicalize();
    let d = model.config().d_model;
    let mut data = Vec::new();
    let mut rows = Vec::new();
    for s in &ds.sentences {
        if s.valid_count() == 0 {
            continue;
        }
        let batch = SentenceBatch::from_record(s, &model.config().modalities, |_| true)?;
        let hidden = model.encode(&batch)?;
        for (i, w) in s.words.iter().enumerate() {
            if w.valid {
                data.extend_from_slice(hidden.row(i));
                rows.push(EmbeddingRow {
                    subject: w.subject.clone(),
                    sentence_id: w.sentence_id,
                    word_index: w.word_index,
                    token: w.token.clone(),
                    label: w.label,
                });
            }
        }
    }
    Ok((Sidecar::new(vec![rows.len(), d], data)?, rows))
}

/// Writes the embedding sidecar to `path` and its manifest beside it.
pub fn export_embeddings(model: &ReadingModel, ds: &Dataset, path: &Path) -> Result<EmbeddingManifest> {
    let (sidecar, words) = encoder_outputs(model, ds)?;
    let manifest = EmbeddingManifest {
        format: EMBEDDING_FORMAT.to_string(),
        sidecar: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        rows: words.len(),
        dim: sidecar.dims[1],
        words,
    };
    sidecar.write(path)?;
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
    write_atomic(&manifest_path(path), |w| {
        w.write_all(&json)?;
        w.write_all(b"\n")
    })?;
    Ok(manifest)
}
