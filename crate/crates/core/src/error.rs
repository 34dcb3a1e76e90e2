use thiserror::Error;

/// Errors produced by the TDOA library.
#[derive(Debug, Error)]
pub enum TdoaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not skew-symmetric: entry ({row},{col}) deviates by {deviation:e} s")]
    NotSkewSymmetric {
        /// One-based row index of the worst entry.
        row: usize,
        /// One-based column index of the worst entry.
        col: usize,
        deviation: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(
        "missing data is not recoverable uniquely: smallest singular value {min_singular:e}, \
         condition number {condition:e}"
    )]
    NotRecoverable { min_singular: f64, condition: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("localization failed: {0}")]
    LocalizationFailed(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TdoaError>;
