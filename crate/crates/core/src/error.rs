use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("invalid size: {0}")]
    Size(String),

    #[error("signal support reaches index {end} but the truncation holds {size} entries")]
    Truncation { end: usize, size: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! ensure {
    ($cond:expr, $err:expr) => {
        if !$cond {
            return Err($err);
        }
    };
}
pub(crate) use ensure;
