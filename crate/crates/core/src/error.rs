use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),
    #[error("numerical gate: {0}")]
    Numerical(String),
    #[error("out of range: {0}")]
    Range(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Range(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
