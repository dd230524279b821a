use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform.
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },

    /// A configuration value is out of range or internally inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// A forward pass or update produced NaN or infinity.
    #[error("numeric failure in {0}")]
    Numeric(String),

    /// A checkpoint file is malformed or from an unsupported version.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn numeric(context: impl Into<String>) -> Self {
        Error::Numeric(context.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
