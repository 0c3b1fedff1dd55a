use std::io;

use crate::model::Violation;

/// Errors produced anywhere in the extraction toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid BIO sequence: {label} at position {position} has no compatible predecessor")]
    InvalidBio { position: usize, label: String },

    #[error("overlapping spans {first:?} and {second:?}")]
    Overlap {
        first: (usize, usize),
        second: (usize, usize),
    },

    #[error("category {category} is not part of tag scheme {scheme}")]
    Category { category: String, scheme: String },

    #[error("span {start}..{end} out of bounds for sentence of {len} tokens")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },

    #[error("framed input of length {len} exceeds the maximum of {max}")]
    TooLong { len: usize, max: usize },

    #[error("no embedding stored under key {0:?}")]
    MissingEmbedding(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("file format error: {0}")]
    Format(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("operation requires CRF mode")]
    Mode,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),

    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: validation failed: {violations:?}")]
    Validation {
        line: usize,
        violations: Vec<Violation>,
    },

    #[error("task error: {0}")]
    Task(String),

    #[error("datasets share no sentence ids")]
    IdMismatch,

    #[error("invalid model file: {0}")]
    Model(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
