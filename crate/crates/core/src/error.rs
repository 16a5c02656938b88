use thiserror::Error;

/// Errors produced by kernel, measure, system and certificate computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the state box")]
    Domain { point: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("control input {input:?} lies outside the control box")]
    Input { input: Vec<f64> },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("transport instance too large: {atoms} atoms exceeds the limit of {limit}")]
    Size { atoms: usize, limit: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("Lipschitz estimation failed: {0}")]
    Estimation(String),

    #[error("certificate error: {0}")]
    Certificate(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
