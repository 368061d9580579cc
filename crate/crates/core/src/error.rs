use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error(
        "circulant embedding has negative eigenvalue {value:e} at index {index}; \
         double the grid (more steps) or shorten the horizon and retry"
    )]
    NegativeEigenvalue { index: usize, value: f64 },

    #[error("grid too large for the Cholesky sampler: {n_steps} steps (limit {limit})")]
    GridTooLarge { n_steps: usize, limit: usize },

    #[error("empirical measures have different atom counts ({left} vs {right})")]
    AtomCountMismatch { left: usize, right: usize },

    #[error("inadmissible exponents: {}", .0.join("; "))]
    Inadmissible(Vec<String>),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("non-finite state at step {step}, particle {particle}")]
    NonFiniteState { step: usize, particle: usize },

    #[error("state blow-up |x| = {value:e} at step {step}, particle {particle}")]
    BlowUp { step: usize, particle: usize, value: f64 },

    #[error("drift model `{0}` has no averaged drift; build one with averaging::numeric_average_drift")]
    MissingAveragedDrift(String),

    #[error("assumption validation failed: {0}")]
    AssumptionsViolated(String),

    #[error("noise batch does not match solver configuration: {0}")]
    NoiseMismatch(String),
}

impl Error {
    /// Numerical aborts, as opposed to invalid inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NegativeEigenvalue { .. }
                | Error::NonFiniteState { .. }
                | Error::BlowUp { .. }
                | Error::Invariant(_)
        )
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
