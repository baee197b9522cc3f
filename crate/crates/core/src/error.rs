use thiserror::Error;

/// Errors raised by the numerical core, the models and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is not symmetric: |M[{row},{col}] - M[{col},{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input {value} outside the unit interval in dimension {dim}")]
    OutOfRange { dim: usize, value: f64 },

    #[error("every optimizer restart failed: {0}")]
    OptimizationFailed(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("unknown simulator id `{0}`")]
    UnknownSimulator(String),

    #[error("replication {rep}: {source}")]
    Replication {
        rep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
