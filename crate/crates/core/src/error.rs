use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("state space of {size} points exceeds the cap of {cap}")]
    StateCap { size: u128, cap: usize },
    #[error("chain is not ergodic: {0}")]
    NotErgodic(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}
