//! Versioned JSON model files.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Mode, Params, TaggerModel};
use crate::encoder::builtin::FEATURE_BLOCKS;
use crate::encoder::{EncoderParams, Vocab};
use crate::error::{Error, Result};
use crate::tags::TagScheme;

pub const MODEL_FORMAT: &str = "easqe-model-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Backend {
    Builtin,
    External,
}

#[derive(Serialize, Deserialize)]
struct Dims {
    labels: usize,
    hidden_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embed_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocab_size: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct EncoderTensors {
    token_embeddings: Vec<Vec<f64>>,
    segment_embeddings: Vec<Vec<f64>>,
    projection: Vec<Vec<f64>>,
    projection_bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    scheme: TagScheme,
    mode: Mode,
    backend: Backend,
    dims: Dims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocab: Option<Vec<String>>,
    emission_weight: Vec<Vec<f64>>,
    emission_bias: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    encoder: Option<EncoderTensors>,
}

fn nested(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(name: &str, rows: Vec<Vec<f64>>, shape: (usize, usize)) -> Result<Array2<f64>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(Error::Shape(format!("{name} must be {}×{}", shape.0, shape.1)));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec(shape, flat).map_err(|e| Error::Shape(format!("{name}: {e}")))
}

fn vector(name: &str, v: Vec<f64>, len: usize) -> Result<Array1<f64>> {
    if v.len() != len {
        return Err(Error::Shape(format!("{name} must have {len} entries, found {}", v.len())));
    }
    Ok(Array1::from(v))
}

impl TaggerModel {
    pub fn to_json(&self) -> String {
        let p = &self.params;
        let enc = p.encoder.as_ref();
        let file = ModelFile {
            format: MODEL_FORMAT.to_owned(),
            scheme: self.scheme,
            mode: self.mode,
            backend: if self.uses_builtin_encoder() {
                Backend::Builtin
            } else {
                Backend::External
            },
            dims: Dims {
                labels: p.labels(),
                hidden_dim: p.hidden_dim(),
                embed_dim: enc.map(EncoderParams::embed_dim),
                vocab_size: enc.map(EncoderParams::vocab_size),
            },
            vocab: self.vocab.as_ref().map(|v| v.as_list().to_vec()),
            emission_weight: nested(&p.emission_weight),
            emission_bias: p.emission_bias.to_vec(),
            transitions: nested(&p.transitions),
            encoder: enc.map(|e| EncoderTensors {
                token_embeddings: nested(&e.token_embeddings),
                segment_embeddings: nested(&e.segment_embeddings),
                projection: nested(&e.projection),
                projection_bias: e.projection_bias.to_vec(),
            }),
        };
        serde_json::to_string(&file).expect("model tensors are finite")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Format(format!("unsupported model format {:?}", file.format)));
        }
        let labels = file.scheme.len();
        if file.dims.labels != labels {
            return Err(Error::DimensionMismatch {
                expected: labels,
                found: file.dims.labels,
            });
        }
        let d = file.dims.hidden_dim;
        let (vocab, encoder) = match (file.backend, file.vocab, file.encoder) {
            (Backend::External, None, None) => (None, None),
            (Backend::Builtin, Some(list), Some(t)) => {
                let vocab =
                    Vocab::from_list(list).ok_or_else(|| Error::Model("malformed vocabulary".into()))?;
                let de = file
                    .dims
                    .embed_dim
                    .ok_or_else(|| Error::Model("built-in model lacks embed_dim".into()))?;
                let enc = EncoderParams {
                    token_embeddings: matrix("token_embeddings", t.token_embeddings, (vocab.len(), de))?,
                    segment_embeddings: matrix("segment_embeddings", t.segment_embeddings, (2, de))?,
                    projection: matrix("projection", t.projection, (d, FEATURE_BLOCKS * de))?,
                    projection_bias: vector("projection_bias", t.projection_bias, d)?,
                };
                (Some(vocab), Some(enc))
            }
            _ => return Err(Error::Model("backend does not match stored encoder fields".into())),
        };
        let params = Params {
            emission_weight: matrix("emission_weight", file.emission_weight, (labels, d))?,
            emission_bias: vector("emission_bias", file.emission_bias, labels)?,
            transitions: matrix("transitions", file.transitions, (labels + 2, labels + 2))?,
            encoder,
        };
        if !params.all_finite() {
            return Err(Error::Model("non-finite parameter".into()));
        }
        TaggerModel::from_params(file.scheme, file.mode, vocab, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
