use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("response is not standardized: rms norm is {norm}, expected 1")]
    NotStandardized { norm: f64 },

    /// A residual norm or an absolute-value argument of the criterion sits
    /// within the guard distance of its kink.
    #[error("criterion is not differentiable here: {0}")]
    NonDifferentiable(String),

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{method} failed on repetition {repetition}: {source}")]
    Repetition {
        method: String,
        repetition: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
