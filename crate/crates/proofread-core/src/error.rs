//! Crate-wide error type.

use crate::corruption::ErrorOperator;

/// Errors produced by any module in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Character has no key on the active layout.
    #[error("character {0:?} has no key on the layout")]
    UnknownCharacter(char),

    /// An error operator was forced at a position where it cannot apply.
    #[error("operator {op:?} cannot apply at position {pos} (text length {len})")]
    InvalidPosition {
        op: ErrorOperator,
        pos: usize,
        len: usize,
    },

    /// Input longer than the largest bucket key; segment before bucketing.
    #[error("input of {tokens} tokens exceeds the largest bucket key {max}")]
    OverLength { tokens: usize, max: usize },

    /// Corpus evaluation over zero examples is undefined.
    #[error("cannot evaluate an empty corpus")]
    EmptyEvaluation,

    /// Paired streams (dataset/answers) disagree in length.
    #[error("stream length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    /// An operation requiring at least one reference got none.
    #[error("target set must be non-empty")]
    EmptyTargets,

    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Keyboard layout violates a structural invariant.
    #[error("invalid layout: {0}")]
    Layout(String),

    /// Vocabulary file could not be parsed.
    #[error("vocabulary error: {0}")]
    Vocab(String),

    /// The judge backend failed or is unreachable.
    #[error("judge unavailable: {0}")]
    Judge(String),

    /// Input data is malformed, with the offending line when known.
    #[error("malformed input at line {line}: {message}")]
    Malformed { line: usize, message: String },

    /// An edit log does not fit the source it is replayed against.
    #[error("edit log replay failed: {0}")]
    Replay(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
