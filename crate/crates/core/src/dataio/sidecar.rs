//! Packed little-endian `f64` arrays.
//!
//! Layout: the 8-byte magic `REMBF64\0`, a `u32` rank, `rank` × `u32`
//! dimensions, then the row-major payload.

use crate::error::{Error, Result};
use crate::fsutil;
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"REMBF64\0";

#[derive(Clone, Debug, PartialEq)]
pub struct Sidecar {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Sidecar {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::Shape {
                op: "Sidecar::new",
                left: dims,
                right: vec![data.len()],
            });
        }
        Ok(Sidecar { dims, data })
    }

    /// Row `i` along the leading dimension.
    pub fn row(&self, i: usize) -> Option<&[f64]> {
        let stride: usize = self.dims.iter().skip(1).product();
        let rows = *self.dims.first()?;
        (i < rows).then(|| &self.data[i * stride..(i + 1) * stride])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::schema(format!("sidecar: {m}"));
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |off: usize| -> Result<usize> {
            let b = bytes.get(off..off + 4).ok_or_else(|| bad("truncated header"))?;
            Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
        };
        let rank = u32_at(8)?;
        let dims = (0..rank).map(|i| u32_at(12 + 4 * i)).collect::<Result<Vec<_>>>()?;
        let start = 12 + 4 * rank;
        let numel: usize = dims.iter().product();
        let payload = &bytes[start.min(bytes.len())..];
        if payload.len() != numel * 8 {
            return Err(bad(&format!(
                "payload holds {} bytes, dims {dims:?} need {}",
                payload.len(),
                numel * 8
            )));
        }
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Sidecar { dims, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fsutil::write_bytes_atomic(path, &self.to_bytes())
    }
}
