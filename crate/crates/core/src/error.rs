//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by series handling, regression, and state-space routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("csv error at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error("invalid period token `{token}`: {msg}")]
    Period { token: String, msg: String },

    #[error("frequency mismatch: {0}")]
    Frequency(String),

    #[error("series alignment failed: {0}")]
    Alignment(String),

    #[error("missing value at {period}: {context}")]
    MissingValue { period: String, context: String },

    #[error("non-positive value {value} at {period}: {context}")]
    NonPositive {
        period: String,
        value: f64,
        context: String,
    },

    #[error("design matrix is rank deficient: column `{column}` is collinear with earlier columns")]
    RankDeficient { column: String },

    #[error("too few observations: need at least {needed}, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("numerically singular matrix: {0}")]
    Singular(String),

    #[error("kalman filter failed at period {t}: {msg}")]
    Filter { t: usize, msg: String },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
