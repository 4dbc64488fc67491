//! Error types shared across the library.

use thiserror::Error;

/// Unified error type for configuration, input, and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates its documented range.
    #[error("configuration error: {0}")]
    Config(String),

    /// Incompatible shapes or layouts passed to a kernel.
    #[error("usage error: {0}")]
    Usage(String),

    /// Problem data evaluated to a non-finite value or is otherwise unusable.
    #[error("input error: {0}")]
    Input(String),

    /// A numerical procedure failed (singular solve, eigensolver breakdown, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// File I/O wrapped with context.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed external data (matrix files, config files, checkpoints).
    #[error("parse error: {0}")]
    Parse(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for a configuration error with a formatted message.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Shorthand for a usage error with a formatted message.
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Shorthand for a numerical failure with a formatted message.
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
