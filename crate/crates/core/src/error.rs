use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The variance integral of the skeleton volatility vanished; the caller
    /// has to route to the degenerate (zero-volatility) branch.
    #[error("degenerate denominator: integrated squared volatility {0:e} is below threshold")]
    DegenerateDenominator(f64),

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("optimizer did not converge in any of {n_starts} starts (best value {best_value}, gradient norm {best_gradient_norm:e})")]
    NonConvergence {
        n_starts: usize,
        best_value: f64,
        best_gradient_norm: f64,
    },

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("cross-check failed: {0}")]
    CrossCheck(String),

    #[error("{aborted} of {requested} replicas aborted on non-finite state")]
    AbortedReplicas { aborted: usize, requested: usize },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateDenominator(_)
                | Error::NonFiniteState { .. }
                | Error::NonConvergence { .. }
                | Error::CrossCheck(_)
                | Error::AbortedReplicas { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
