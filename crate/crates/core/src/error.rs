use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension {n} exceeds the supported maximum {max}")]
    DimensionTooLarge { n: usize, max: usize },

    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("invalid moment query: {0}")]
    InvalidQuery(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),

    #[error("cap {cap} is infeasible for dimension {n} (needs cap >= 1/n)")]
    CapInfeasible { cap: f64, n: usize },

    #[error("vectors are not comparable in the Schur order")]
    NotComparable,

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
