//! Error taxonomy shared across the engine.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A draft sequence or tree operation received no tokens to work with.
    #[error("draft is empty")]
    EmptyDraft,

    /// Structural tree invariant broken (cyclic parents, bad positions, ...).
    #[error("malformed tree: {0}")]
    MalformedTree(String),

    /// Graft preconditions not met (token or position mismatch at the merge point).
    #[error("merge mismatch: {0}")]
    MergeMismatch(String),

    /// An attention mask does not describe the tree it was paired with.
    #[error("mask mismatch: {0}")]
    MaskMismatch(String),

    /// A trace-replay model was queried past its final record.
    #[error("trace exhausted: no record at position {position}")]
    TraceExhausted { position: usize },

    /// A trace-replay model was queried with a prefix it never recorded.
    #[error("trace diverged: token at position {position} is outside the recorded top-k")]
    TraceDiverged { position: usize },

    /// A trace file could not be parsed.
    #[error("trace parse error at line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    /// Two runs that must share a transcript disagree; losslessness is broken.
    #[error("transcript mismatch at position {position}")]
    TranscriptMismatch { position: usize },

    /// Invalid run or strategy configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A distribution failed validation (ordering, probability range, duplicates).
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
