use thiserror::Error;

/// Errors produced by the link simulator and the demodulator engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chaotic seed {seed}: {reason}")]
    InvalidSeed { seed: f64, reason: &'static str },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("backward called before a recorded forward pass")]
    NoForwardPass,

    #[error("model file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(expected: impl std::fmt::Debug, actual: impl std::fmt::Debug) -> Self {
        Error::ShapeMismatch {
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }
}
