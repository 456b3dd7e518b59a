use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("point out of domain: {0}")]
    OutOfDomain(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("numeric error in element {element}: {msg}")]
    Numeric { element: usize, msg: String },

    #[error("solver error: {msg} (residual {residual:e})")]
    Solver { msg: String, residual: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
