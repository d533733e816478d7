use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node {node} has operation index {label} outside a vocabulary of {size}")]
    LabelOutOfVocabulary { node: usize, label: usize, size: usize },

    #[error("unknown operation {0:?}")]
    UnknownOperation(String),

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("record {id}: {message}")]
    Validation { id: String, message: String },

    #[error("search space exhausted")]
    SpaceExhausted,

    #[error("oracle failed on {id}: {message}")]
    Oracle { id: String, message: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
