use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode or encode image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("unsupported pixel format in {path}: {format}")]
    UnsupportedFormat { path: PathBuf, format: String },

    #[error("invalid dimensions {width}x{height}: {reason}")]
    Dimensions {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("dataset error in {root}: {reason}")]
    Dataset { root: PathBuf, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("tape is stale: recorded at generation {recorded}, network is at {current}")]
    StaleTape { recorded: u64, current: u64 },

    #[error("non-finite gradient in parameter tensor {tensor} at index {index}")]
    NonFiniteGradient { tensor: usize, index: usize },

    #[error("non-finite loss at epoch {epoch}: {term}")]
    NonFiniteLoss { epoch: usize, term: &'static str },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
