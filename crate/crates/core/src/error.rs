use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible range or two settings disagree.
    #[error("configuration error: {0}")]
    Config(String),
    /// A field or state has the wrong shape.
    #[error("model error: {0}")]
    Model(String),
    /// An operation was called outside its documented domain.
    #[error("usage error: {0}")]
    Usage(String),
    /// A step produced a non-finite state.
    #[error("state became non-finite at time index {time_index}")]
    Diverged { time_index: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
