use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NgkError>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum NgkError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("response column `{0}` not found")]
    MissingResponse(String),

    #[error("predictor column {column} ({name}) is constant and cannot be standardized")]
    ConstantColumn { column: usize, name: String },

    #[error("response has zero variance after centering")]
    ZeroVarianceResponse,

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("scale parameter {index} is negative or non-finite ({value})")]
    InvalidScale { index: usize, value: f64 },

    #[error("predictor index {index} out of range for p = {p}")]
    IndexOutOfRange { index: usize, p: usize },

    #[error("linear system is numerically singular: {0}")]
    Singular(String),

    #[error("kernel matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("NGK selected no predictors on the original data; cannot build a null initial model")]
    NullInitialModel,

    #[error("{failed} of {total} replicates failed, exceeding the allowed fraction")]
    TooManyFailures { failed: usize, total: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("cannot write output: {0}")]
    Output(String),
}

impl NgkError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            NgkError::InvalidInput(_)
            | NgkError::IndexOutOfRange { .. }
            | NgkError::InvalidScale { .. }
            | NgkError::DimensionMismatch { .. }
            | NgkError::Output(_) => ErrorCategory::Usage,
            NgkError::Io { .. }
            | NgkError::Parse { .. }
            | NgkError::MissingResponse(_)
            | NgkError::ConstantColumn { .. }
            | NgkError::ZeroVarianceResponse
            | NgkError::NonFinite { .. } => ErrorCategory::Data,
            NgkError::Singular(_)
            | NgkError::NotPsd(_)
            | NgkError::NullInitialModel
            | NgkError::TooManyFailures { .. }
            | NgkError::Numerical(_) => ErrorCategory::Numerical,
        }
    }
}
