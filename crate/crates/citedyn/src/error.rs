//! Crate-wide error and result types.
//!
//! Errors are split into two broad classes so callers (in particular the
//! command-line frontend) can map them to distinct exit codes: problems
//! with input data or configuration, and numerical failures arising during
//! simulation or inference.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Any failure surfaced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data, configuration, or arguments were invalid.
    #[error("invalid input: {0}")]
    Input(String),

    /// A file could not be read or written.
    #[error("i/o error on {path}: {source}")]
    Io {
        /// The file involved.
        path: PathBuf,
        /// The underlying error.
        #[source]
        source: std::io::Error,
    },

    /// A record could not be parsed.
    #[error("parse error at {context}: {message}")]
    Parse {
        /// Where the malformed content was found (file and line, typically).
        context: String,
        /// What was wrong with it.
        message: String,
    },

    /// A numerical procedure failed (non-finite values, divergence of an
    /// optimizer, an unsampleable posterior, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Build an [`Error::Input`] from anything printable.
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Build an [`Error::Numerical`] from anything printable.
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Attach a path to an i/o error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the failure is numerical rather than an input problem.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}
