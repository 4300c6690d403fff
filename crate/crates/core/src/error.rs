use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("read failure at line {line}: {source}")]
    Read {
        line: usize,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown BIO tag {tag:?} at token {index}")]
    UnknownTag { index: usize, tag: String },

    #[error("invalid spans: {0}")]
    InvalidSpans(String),

    #[error("cannot build query for entity type {entity_type:?}: inventory is empty")]
    EmptyInventory { entity_type: String },

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: usize, vocab_size: usize },

    #[error("non-finite activation in {location}")]
    NonFinite { location: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("coordinate {coord} outside context of length {len}")]
    OutOfContext { coord: usize, len: usize },

    #[error("no unmasked tokens to average the loss over")]
    EmptyLoss,

    #[error("prediction references unknown sentence {0}")]
    UnknownSentence(String),

    #[error("{0}")]
    Stats(String),

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
