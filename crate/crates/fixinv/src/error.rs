//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = FixinvError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FixinvError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// An operation produced NaN or +-Inf. Operations fail fast instead of
    /// propagating non-finite values.
    #[error("non-finite output in {context}")]
    NonFiniteOutput { context: &'static str },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("operation requires a linear pair with an explicit composite")]
    NotLinear,

    #[error("operator pair has no gradient capability")]
    NoGradient,

    #[error("step index {index} out of range 1..={max}")]
    OutOfRange { index: usize, max: usize },

    #[error("reference vector has zero norm")]
    ZeroReference,

    #[error("trace too short: need {needed} recorded iterates, have {got}")]
    TraceTooShort { needed: usize, got: usize },

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("strategy list is empty")]
    EmptyStrategies,

    #[error("seed grid is empty")]
    EmptyGrid,

    #[error("invalid ring radius {radius} for a {h}x{w} grid")]
    InvalidRadius { radius: usize, h: usize, w: usize },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FixinvError {
    /// Process exit code for the CLI: 1 for configuration problems,
    /// 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            FixinvError::NonFiniteOutput { .. } => 2,
            _ => 1,
        }
    }
}
