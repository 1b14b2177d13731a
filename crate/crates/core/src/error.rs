use thiserror::Error;

/// Errors produced anywhere in the simulation and reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cutoff mismatch: {0} vs {1}")]
    CutoffMismatch(usize, usize),

    #[error("mode index {index} out of range for a {num_modes}-mode space")]
    ModeOutOfRange { index: usize, num_modes: usize },

    #[error("mode set is empty")]
    EmptyModeSet,

    #[error("mode {0} listed more than once")]
    DuplicateMode(usize),

    #[error("transmittance {0} outside [0, 1]")]
    Transmittance(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("cutoff {cutoff} too small: truncated Poisson tail {tail:e} exceeds {limit:e}")]
    CutoffTooSmall { cutoff: usize, tail: f64, limit: f64 },

    #[error("state cannot be normalized")]
    NotNormalizable,

    #[error("invalid state model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("fit did not converge after {0} iterations")]
    NonConvergence(usize),

    #[error("missing fringe dataset for pair {0}")]
    MissingPair(String),

    #[error("missing singles sweep for channel {0}")]
    MissingSinglesSweep(String),

    #[error("line {line}: {msg}")]
    MalformedRecord { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
