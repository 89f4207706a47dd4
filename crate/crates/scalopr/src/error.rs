use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum ScaloprError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("degenerate roots: no partner found for root {root} (|root| = {modulus})")]
    DegenerateRoots { root: String, modulus: f64 },

    #[error("numerical failure at scale {scale}: {message}")]
    Numerical { scale: usize, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("bad input file {path}: {message}")]
    BadFile { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, ScaloprError>;

impl ScaloprError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        ScaloprError::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        ScaloprError::Config(msg.into())
    }
}
