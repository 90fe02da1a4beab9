use thiserror::Error;

/// Errors produced by the changepoint engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate weights: no particle carries positive weight")]
    DegenerateWeights,

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot shrink a particle set from {from} to {to} by replication; resample instead")]
    ShrinkRequested { from: usize, to: usize },

    #[error("length mismatch: {old} old particles vs {new} new particles")]
    LengthMismatch { old: usize, new: usize },

    #[error("empty input")]
    Empty,

    #[error("infeasible budget: floor {floor} x {streams} streams exceeds total {total}")]
    InfeasibleBudget {
        floor: usize,
        streams: usize,
        total: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid_config(msg: impl Into<String>) -> Self {
        Self::InvalidConfiguration(msg.into())
    }

    pub(crate) fn invalid_param(msg: impl Into<String>) -> Self {
        Self::InvalidParameter(msg.into())
    }
}
