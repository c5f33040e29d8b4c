//! Model checkpoints: a JSON header next to a rank-1 sidecar holding every
//! parameter back to back. The header carries the sidecar's SHA-256.

use super::config::{LossConfig, ModelConfig};
use super::network::ReadingModel;
use crate::dataio::Sidecar;
use crate::error::{Error, Result};
use crate::fsutil;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const CHECKPOINT_FORMAT: &str = "reademb-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub config: ModelConfig,
    pub seed: u64,
    pub loss: LossConfig,
    pub params: Vec<ParamEntry>,
    pub payload: String,
    pub sha256: String,
}

pub fn payload_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("bin")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save_checkpoint(model: &ReadingModel, loss: &LossConfig, path: &Path) -> Result<()> {
    let mut entries = Vec::new();
    let mut data = Vec::with_capacity(model.params().total_numel());
    for (name, t) in model.params().iter() {
        entries.push(ParamEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: data.len(),
        });
        data.extend_from_slice(t.data());
    }
    let total = data.len();
    let bytes = Sidecar::new(vec![total], data)?.to_bytes();
    let payload = payload_path(path);
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.to_string(),
        config: model.config().clone(),
        seed: model.config().seed,
        loss: *loss,
        params: entries,
        payload: payload
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .expect("file path"),
        sha256: sha256_hex(&bytes),
    };
    fsutil::write_bytes_atomic(&payload, &bytes)?;
    let json = serde_json::to_vec_pretty(&header).expect("serialisable header");
    fsutil::write_bytes_atomic(path, &json)
}

pub fn load_checkpoint(path: &Path) -> Result<(ReadingModel, LossConfig)> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let header: CheckpointHeader = serde_json::from_slice(&text)
        .map_err(|e| Error::schema(format!("{}: {e}", path.display())))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::schema(format!("unsupported checkpoint format '{}'", header.format)));
    }
    let payload = path.parent().unwrap_or(Path::new(".")).join(&header.payload);
    let bytes = std::fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    let found = sha256_hex(&bytes);
    if found != header.sha256 {
        return Err(Error::Checksum {
            path: payload,
            expected: header.sha256,
            found,
        });
    }
    let flat = Sidecar::from_bytes(&bytes)?;
    let mut model = ReadingModel::new(header.config)?;
    if header.params.len() != model.params().len() {
        return Err(Error::schema(format!(
            "checkpoint holds {} parameters, model defines {}",
            header.params.len(),
            model.params().len()
        )));
    }
    for e in &header.params {
        let n: usize = e.shape.iter().product();
        let values = flat
            .data
            .get(e.offset..e.offset + n)
            .ok_or_else(|| Error::schema(format!("parameter '{}' runs past the payload", e.name)))?;
        model.set_param(&e.name, values)?;
    }
    Ok((model, header.loss))
}
