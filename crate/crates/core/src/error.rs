use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the pressure-surrogate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("{path}: row {row}, column `{column}`: {reason}")]
    Load {
        path: PathBuf,
        row: usize,
        column: String,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("grid mismatch: expected {expected} samples, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero deviation matrix: every trace equals its motored reference")]
    ZeroDeviation,

    #[error("zero-variance {what} in column {index}")]
    ZeroVariance { what: &'static str, index: usize },

    #[error("non-PD kernel matrix")]
    NotPositiveDefinite,

    #[error("hyperparameter fit failed: {0}")]
    Fit(String),

    #[error("synthetic cycle generation failed: {0}")]
    Generation(String),

    #[error("empty after excluding undefined entries")]
    EmptyAfterExclusion,
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that come from numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroDeviation
                | Error::NotPositiveDefinite
                | Error::Fit(_)
                | Error::Generation(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
