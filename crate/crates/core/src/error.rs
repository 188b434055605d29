use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("angle of departure {0}° is outside the open interval (-90°, 90°)")]
    EndfireAngle(f64),

    #[error("cannot draw {requested} distinct delays from only {available} delay bins")]
    NotEnoughDelays { requested: usize, available: usize },

    #[error("ISI-ZF beamforming infeasible: {0}")]
    InfeasibleZf(String),

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("beamformer power {power} exceeds budget {budget}")]
    PowerViolation { power: f64, budget: f64 },

    #[error("water-filling needs at least one positive gain")]
    AllZeroGains,

    #[error("guard interval {guard} is shorter than twice the delay spread ({required})")]
    GuardTooSmall { guard: usize, required: usize },

    #[error("insufficient steady-state samples: got {got}, need at least {need}")]
    InsufficientSamples { got: usize, need: usize },

    #[error("config validation failed: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serde(String),

    #[error("plotting: {0}")]
    Plot(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
