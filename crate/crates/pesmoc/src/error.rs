//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point lies outside the domain at coordinate {coord}")]
    OutOfDomain { coord: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty feasible set: no grid point satisfies all constraints")]
    EmptyFeasibleSet,

    /// Raised by Pareto-set sampling when the sampled constraints are
    /// negative on the whole grid. Callers skip the sample.
    #[error("infeasible sample: sampled constraints are negative everywhere")]
    InfeasibleSample,

    #[error("exact hypervolume supports 2 or 3 objectives, got {0}")]
    UnsupportedObjectiveCount(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("problem mismatch: {0}")]
    ProblemMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems,
    /// 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::OutOfDomain { .. }
            | Error::ProblemMismatch(_)
            | Error::UnsupportedObjectiveCount(_) => 2,
            Error::Numerical(_) | Error::EmptyFeasibleSet | Error::InfeasibleSample => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
