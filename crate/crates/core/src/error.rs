use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the style pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("image decode error: {0}")]
    Decode(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("training data for `{0}` contains a single label")]
    SingleClass(String),

    #[error("non-finite gradient at step {step}, coordinate {coordinate}")]
    NonFiniteGradient { step: u64, coordinate: usize },

    #[error("training failed for class `{class}`: {source}")]
    ClassTraining {
        class: String,
        #[source]
        source: Box<Error>,
    },

    #[error("id `{id}` missing from {context}")]
    MissingId { id: String, context: String },

    #[error("leakage: stage-1 model `{channel}` was trained on non-train id `{id}`")]
    Leakage { channel: String, id: String },

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
