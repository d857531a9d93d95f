use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which side of a correlation had no variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegenerateSide {
    First,
    Second,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A JSONL line that is not valid JSON (or not the expected shape).
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },

    /// Well-formed input whose content breaks a data contract.
    #[error("line {line}: {message}")]
    InvalidRecord { line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("empty token sequence: {0}")]
    EmptySequence(&'static str),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("index {index} out of range for {len} classes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("degenerate correlation: {0:?} vector has zero variance")]
    DegenerateCorrelation(DegenerateSide),

    #[error("degenerate variance: differences have zero sample variance")]
    DegenerateVariance,

    #[error("value {0} outside [-1, 1]")]
    Domain(f64),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
