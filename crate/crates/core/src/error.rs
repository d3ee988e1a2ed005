use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A scheme, surface, or run configuration violates an invariant.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A matrix factorization or other numerical step failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A statistical estimate could not be formed from the given inputs.
    #[error("estimation failure: {0}")]
    Estimation(String),
    /// An estimator was called outside its domain.
    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn estimation(msg: impl Into<String>) -> Self {
        Error::Estimation(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
