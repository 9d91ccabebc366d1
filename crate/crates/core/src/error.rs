use thiserror::Error;

/// Errors raised by ensemble operations, functionals, solvers and the harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index {index} out of range for dimension {dim}")]
    Index { index: usize, dim: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
