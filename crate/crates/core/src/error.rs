use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("relative phase undefined: coherence is zero")]
    UndefinedPhase,

    #[error("degenerate orbital phase: |f| = {0:e} is below threshold")]
    DegeneratePhase(f64),

    #[error("calibration failed: {0}")]
    CalibrationFailure(String),

    #[error("control parameter {value} outside supported interval [{lo}, {hi}]")]
    OutOfSupport { value: f64, lo: f64, hi: f64 },

    #[error("orthonormality drift {drift:e} at t = {time} ms exceeds limit {limit:e}")]
    OrthonormalityDrift { drift: f64, time: f64, limit: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
