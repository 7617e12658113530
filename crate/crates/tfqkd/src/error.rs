use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("layout mismatch: {0}")]
    Layout(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("linear program failed: {0}")]
    Solver(String),
    #[error("counts document: {0}")]
    Schema(String),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
