use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid time grid: {0}")]
    Grid(String),
    #[error("invalid problem data: {0}")]
    Problem(String),
    #[error("non-finite value encountered: {0}")]
    Overflow(String),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("invalid witness: {0}")]
    InvalidWitness(String),
    #[error("problem too large for dense assembly: {size} > cap {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(what: impl Into<String>) -> Error {
    Error::Shape(what.into())
}
