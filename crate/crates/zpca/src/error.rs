//! Crate-wide error type.
//!
//! Everything fallible in this crate returns [`Error`]. Protocol code never
//! panics on bad input: malformed parameters, shape mismatches, and wire-level
//! inconsistencies all surface as variants here so callers (the bench harness,
//! tests, downstream users) can report them or bail cleanly.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented range (for example a sampling
    /// accuracy outside `(0, 1/2)` or a rank of zero).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two operands have incompatible shapes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A matrix or vector contains NaN or infinite entries.
    #[error("non-finite entry at {context}")]
    NonFinite { context: String },

    /// A server id fell outside `1..=s`.
    #[error("server {id} out of range for a cluster of {s} servers")]
    InvalidServer { id: usize, s: usize },

    /// A hash function was evaluated outside its domain `[1, m]`.
    #[error("hash input {x} outside domain [1, {m}]")]
    HashDomain { x: u64, m: u64 },

    /// A serialized seed block failed validation on receipt, meaning the
    /// sender and receiver disagree about the shared-randomness protocol.
    #[error("seed block rejected: {0}")]
    SeedMismatch(String),

    /// An entry function failed the shape rules required for weighted
    /// sampling. See `entry_functions::validate`.
    #[error("entry function violates sampling shape rule {rule:?}: {detail}")]
    ShapeViolation {
        rule: crate::entry_functions::ShapeRule,
        detail: String,
    },

    /// Every retry of a sampling attempt landed on a virtual (padding)
    /// coordinate, so no real coordinate could be returned.
    #[error("sampler exhausted {attempts} attempts without drawing a real coordinate")]
    SamplerExhausted { attempts: usize },

    /// Every boosted repetition failed; the last underlying failure is kept.
    #[error("all {runs} boosted repetitions failed; last: {last}")]
    AllRunsFailed { runs: usize, last: Box<Error> },
}
