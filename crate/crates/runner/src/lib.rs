//! Configuration-driven pipelines: calibration, parametric amplification,
//! optimal trapping, the trapping-time line search and the resonance scan.
//!
//! Every pipeline writes CSV data, gnuplot scripts and a `manifest.json` into
//! its output directory and returns the in-memory artifact.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod manifest;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use manifest::Manifest;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot write output: {0}")]
    Output(String),

    #[error(transparent)]
    Numerical(#[from] parasqueeze::Error),

    #[error("optimizer stalled: {0}")]
    Stalled(String),
}

impl RunError {
    /// Process exit code: 2 for config and output errors, 3 for numerical
    /// failures, 4 when an optimizer stalled.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Output(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Stalled(_) => 4,
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Output(e.to_string())
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;
