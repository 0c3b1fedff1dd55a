//! Precomputed contextual embeddings.
//!
//! Layout: 16-byte magic `EASQE-EMB-v1\0\0\0\0`, a UTF-8 JSON index object
//! `{key: {rows, cols, offset, byte_len}}` terminated by `\n`, then a payload of
//! little-endian `f32` values in row-major order. Offsets are relative to the
//! start of the payload. Values are widened to `f64` on load.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::HiddenMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 16] = b"EASQE-EMB-v1\0\0\0\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct IndexEntry {
    rows: usize,
    cols: usize,
    offset: usize,
    byte_len: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalEmbeddingStore {
    matrices: BTreeMap<String, HiddenMatrix>,
}

impl ExternalEmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, matrix: HiddenMatrix) {
        self.matrices.insert(key.into(), matrix);
    }

    pub fn get(&self, key: &str) -> Option<&HiddenMatrix> {
        self.matrices.get(key)
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Shared column count, or `None` for an empty store.
    pub fn hidden_dim(&self) -> Option<usize> {
        self.matrices.values().next().map(|m| m.0.ncols())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format("missing EASQE-EMB-v1 magic header".into()));
        }
        let rest = &bytes[MAGIC.len()..];
        let newline = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("index is not newline-terminated".into()))?;
        let index: BTreeMap<String, IndexEntry> = serde_json::from_slice(&rest[..newline])
            .map_err(|e| Error::Format(format!("bad index: {e}")))?;
        let payload = &rest[newline + 1..];

        let mut cols_seen = None;
        let mut matrices = BTreeMap::new();
        for (key, entry) in index {
            let expected = entry.rows * entry.cols * 4;
            if entry.byte_len != expected {
                return Err(Error::Shape(format!(
                    "{key}: {}x{} needs {expected} bytes, index says {}",
                    entry.rows, entry.cols, entry.byte_len
                )));
            }
            if *cols_seen.get_or_insert(entry.cols) != entry.cols {
                return Err(Error::Shape(format!(
                    "{key}: {} columns, other records have {}",
                    entry.cols,
                    cols_seen.unwrap_or_default()
                )));
            }
            let end = entry
                .offset
                .checked_add(entry.byte_len)
                .filter(|&end| end <= payload.len())
                .ok_or_else(|| {
                    Error::Format(format!(
                        "{key}: payload truncated ({} bytes available)",
                        payload.len()
                    ))
                })?;
            let values = payload[entry.offset..end]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect::<Vec<_>>();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("{key}: non-finite value")));
            }
            let m = Array2::from_shape_vec((entry.rows, entry.cols), values)
                .map_err(|e| Error::Shape(format!("{key}: {e}")))?;
            matrices.insert(key, HiddenMatrix(m));
        }
        Ok(ExternalEmbeddingStore { matrices })
    }

    /// Serializes with values narrowed to `f32`; records are laid out in key order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut index = BTreeMap::new();
        let mut payload = Vec::new();
        for (key, m) in &self.matrices {
            let (rows, cols) = m.0.dim();
            let offset = payload.len();
            for v in m.0.iter() {
                payload.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            index.insert(
                key.clone(),
                IndexEntry {
                    rows,
                    cols,
                    offset,
                    byte_len: rows * cols * 4,
                },
            );
        }
        let mut out = MAGIC.to_vec();
        out.extend(serde_json::to_vec(&index).expect("index serializes"));
        out.push(b'\n');
        out.extend(payload);
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }
}
