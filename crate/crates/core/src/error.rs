use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("embedding file error: {0}")]
    Load(String),

    #[error("synthetic generation failed: {0}")]
    Generation(String),

    #[error("surface-form radius fallback failed: {0}")]
    RadiusFallback(String),

    #[error("modularity is undefined: {0}")]
    UndefinedModularity(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("model checkpoint error: {0}")]
    Checkpoint(String),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
