use std::io;
use std::path::PathBuf;

use crate::model::FilterConstraint;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum FannsError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{algorithm} does not support the {constraint} scenario")]
    UnsupportedScenario {
        algorithm: String,
        constraint: FilterConstraint,
    },

    #[error("format error in {path}: {message} (at {location})")]
    Format {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("ground truth is empty")]
    EmptyTruth,

    #[error("workload is empty: {0}")]
    EmptyWorkload(String),

    #[error("index/workload mismatch: {0}")]
    Mismatch(String),

    #[error("index container: {0}")]
    Container(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FannsError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        FannsError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        FannsError::InvalidParameter(msg.into())
    }
}

pub type Result<T, E = FannsError> = std::result::Result<T, E>;

pub(crate) fn param(msg: impl Into<String>) -> FannsError {
    FannsError::param(msg)
}
