use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configured size cap was exceeded.
    #[error("cap exceeded: {0}")]
    Cap(String),
    /// Malformed or inconsistent arguments.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// The request does not apply to the given object (e.g. type split of a proper group).
    #[error("inapplicable: {0}")]
    Inapplicable(String),
    /// A Gram certificate did not reach full rank.
    #[error("certificate failure: {0}")]
    Certificate(String),
    /// Numeric quadrature did not resolve the integrand.
    #[error("under-resolved quadrature: {0}")]
    UnderResolved(String),
    /// Broken internal invariant.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Cap(_) | Error::Invalid(_) => 2,
            Error::Inapplicable(_) => 3,
            Error::Certificate(_) => 4,
            Error::UnderResolved(_) => 5,
            Error::Internal(_) => 1,
        }
    }
}
