//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by construction, I/O, and sampling.
#[derive(Debug)]
pub enum Error {
    /// A constructor argument violates a documented invariant.
    InvalidArgument(String),
    /// Two fields or a field and an operator disagree on shape.
    ShapeMismatch { expected: String, got: String },
    /// An initialization strategy was asked to run without the history
    /// or observation it needs.
    MissingContext(String),
    /// The sampler produced a non-finite value at the given step index.
    Divergence { step: usize },
    /// Training aborted because the loss became non-finite.
    NonFiniteLoss { iteration: usize },
    /// A file did not conform to its binary or text format. `offset` is
    /// the byte position at which parsing failed, when known.
    Format { path: String, offset: Option<u64>, message: String },
    /// Underlying I/O failure.
    Io { path: String, source: std::io::Error },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::MissingContext(msg) => write!(f, "missing context: {msg}"),
            Error::Divergence { step } => {
                write!(f, "non-finite state at reverse step {step}")
            }
            Error::NonFiniteLoss { iteration } => {
                write!(f, "non-finite loss at iteration {iteration}")
            }
            Error::Format { path, offset, message } => match offset {
                Some(off) => write!(f, "{path}: {message} (byte offset {off})"),
                None => write!(f, "{path}: {message}"),
            },
            Error::Io { path, source } => write!(f, "{path}: {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch { expected: expected.into(), got: got.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<String>, offset: Option<u64>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), offset, message: message.into() }
    }
}
