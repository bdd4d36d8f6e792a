//! Error type shared by every module in the crate.

use alloc::string::String;
use core::fmt;

/// Errors produced by corpus construction, model training, and retrieval.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A record could not be parsed; `line` is 1-based.
    Parse { line: usize, msg: String },
    /// An operation that requires documents was given none.
    EmptyCorpus,
    /// Selection requires tags and the corpus has none.
    NoTags,
    /// Two vectors or codes that must agree in length do not.
    LengthMismatch { left: usize, right: usize },
    /// A matrix expected to be symmetric is not.
    NotSymmetric,
    /// An argument violates a documented precondition.
    InvalidArgument(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
            Error::EmptyCorpus => write!(f, "corpus is empty"),
            Error::NoTags => write!(f, "corpus has no tagged documents"),
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::NotSymmetric => write!(f, "matrix is not symmetric"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
