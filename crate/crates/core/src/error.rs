use thiserror::Error;

/// Errors produced by the randpol library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The projected-gradient solver hit its iteration cap. The last iterate
    /// is feasible and is returned so the caller can decide what to do.
    #[error("solver did not converge after {iterations} iterations (objective {objective:e}, last improvement {last_improvement:e})")]
    NotConverged {
        iterations: usize,
        objective: f64,
        last_improvement: f64,
        weights: Vec<f64>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("recursion diverged: {0}")]
    Diverged(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
