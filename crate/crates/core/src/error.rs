use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimensions or block sizes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An input violates a documented precondition or type invariant.
    #[error("validation failed: {0}")]
    Validation(String),

    /// A dense materialization or state space exceeds its guard.
    #[error("capacity exceeded: {what} has dimension {dim}, limit {limit}")]
    Capacity { what: &'static str, dim: usize, limit: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("outcome {outcome} has probability {probability:e}; cannot collapse")]
    InvalidCollapse { outcome: f64, probability: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Convergence { .. } | Error::NumericalInstability(_))
    }

    /// Short machine-readable category name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Validation(_) => "validation",
            Error::Capacity { .. } => "capacity",
            Error::Convergence { .. } => "convergence",
            Error::NumericalInstability(_) => "numerical_instability",
            Error::InvalidCollapse { .. } => "invalid_collapse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
