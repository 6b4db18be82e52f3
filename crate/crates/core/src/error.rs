use thiserror::Error;

/// Errors produced by the recovery solvers, the limits calculator and the
/// data generators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SblError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid block partition: {0}")]
    InvalidPartition(String),

    #[error("invalid dictionary: {0}")]
    InvalidDictionary(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(String),

    /// `lambda*I + Phi*Sigma0*Phi^T` could not be factorized even after jitter.
    #[error("ill-conditioned model: {0}")]
    IllConditioned(String),

    #[error("search space too large: {count} candidates exceeds limit {limit}")]
    SearchTooLarge { count: u128, limit: u128 },

    #[error("invalid signal spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, SblError>;
