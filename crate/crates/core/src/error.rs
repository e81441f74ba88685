//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("unsupported dimension {dim}: {reason}")]
    UnsupportedDimension { dim: usize, reason: String },

    #[error("curvature singularity: {0}")]
    CurvatureSingularity(String),

    /// Iterative procedure failed to reach its tolerance. Carries the best
    /// bracket/residual information available at the point of failure.
    #[error("convergence failure: {context} (best residual {best_residual:e})")]
    Convergence {
        context: String,
        best_residual: f64,
        history: Vec<f64>,
    },

    /// A solver postcondition (comparison/monotonicity) failed beyond tolerance.
    #[error("solver inconsistency: {0}")]
    SolverInconsistency(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code buckets used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Convergence { .. } | Error::SolverInconsistency(_) => 2,
            _ => 1,
        }
    }
}
