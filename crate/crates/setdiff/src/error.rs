//! Error type shared across the crate.
//!
//! Variants are grouped so the CLI can map them onto distinct exit codes:
//! configuration problems (2), bad input data (3), backend failures (4),
//! everything else (5).

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad configuration: missing config file, unknown backend section,
    /// unset credential variable, invalid flag combination.
    #[error("config error: {0}")]
    Config(String),

    /// A manifest file could not be parsed. `line` is 1-based.
    #[error("manifest error in {path} (line {line}): {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Input data violates a structural invariant (duplicate ids, empty
    /// sets, non-normalizable embeddings, ...).
    #[error("invalid data: {0}")]
    Validation(String),

    /// A statistical operation was called outside its domain
    /// (zero vector, mismatched lengths, undefined variance, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An image could not be fetched or decoded.
    #[error("image {id}: {message}")]
    Image { id: String, message: String },

    /// A backend request failed after all retries.
    #[error("backend {kind} failed after {attempts} attempt(s): {message}")]
    Backend {
        kind: &'static str,
        attempts: u32,
        message: String,
    },

    /// A backend answered, but the answer could not be interpreted.
    #[error("unparseable backend response: {message} (raw: {raw:?})")]
    ResponseParse { message: String, raw: String },

    /// A pipeline stage produced nothing usable (e.g. every proposer round
    /// failed, or every hypothesis errored during scoring).
    #[error("empty output: {0}")]
    EmptyOutput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Exit code contract: 0 success, 2 config, 3 data, 4 backend, 5 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Manifest { .. } | Error::Validation(_) | Error::Domain(_) | Error::Image { .. } => 3,
            Error::Backend { .. } | Error::ResponseParse { .. } | Error::EmptyOutput(_) => 4,
            Error::Io(_) | Error::Internal(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
