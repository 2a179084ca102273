use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by solvers, simulators and the config/CSV layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    #[error("missing required config key `{0}`")]
    MissingKey(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver did not converge after {sweeps} sweeps (last residual {last_residual:.3e})")]
    NonConvergence {
        sweeps: usize,
        last_residual: f64,
        residual_history: Vec<f64>,
    },

    #[error("training diverged at step {step} (loss {loss})")]
    Divergence { step: usize, loss: f64, trace: Vec<f64> },

    #[error("policy callback failed at t={time}: {message}")]
    Policy { time: f64, message: String },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
