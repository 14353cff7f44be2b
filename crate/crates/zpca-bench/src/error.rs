//! Harness-side error type: configuration, dataset plumbing, and report
//! bookkeeping failures, plus transparent pass-through of protocol errors.

use thiserror::Error;

/// Everything that can go wrong between a config file and a report file.
#[derive(Debug, Error)]
pub enum Error {
    /// Config file rejected: unknown or duplicate key, missing field,
    /// unparsable value, or a value out of its documented range.
    #[error("config: {0}")]
    Config(String),

    /// A dataset file failed to load; `location` pinpoints the offending
    /// line (text formats) or byte offset (binary formats).
    #[error("dataset {path} ({location}): {msg}")]
    Dataset {
        path: String,
        location: String,
        msg: String,
    },

    /// Report-side invariant violated (an oracle disagreement, not bad
    /// input): surfaced rather than silently clamped.
    #[error("report: {0}")]
    Report(String),

    /// Underlying protocol error.
    #[error(transparent)]
    Protocol(#[from] zpca::Error),

    /// Filesystem trouble.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
