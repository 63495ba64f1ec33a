use thiserror::Error;

/// Errors raised by the two-stage library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The statistic is undefined at the supplied point (e.g. Sobel at (0, 0)).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("singular design: {0}")]
    SingularDesign(String),
    /// A (δ, A) combination that cannot occur for the product filter.
    #[error("inconsistent regime: {0}")]
    InconsistentRegime(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
