use std::ops::Range;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("range {range:?} out of bounds for length {len}")]
    OutOfBounds { range: Range<usize>, len: usize },

    #[error("shape mismatch: expected {expected} elements, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("invalid block: {0}")]
    Block(String),

    #[error("sample index {index} out of range for dataset of {len} samples")]
    SampleIndex { index: usize, len: usize },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid value for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("reconstruction failed: {0}")]
    Reconstruction(String),

    #[error("run failed: {0}")]
    Run(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
