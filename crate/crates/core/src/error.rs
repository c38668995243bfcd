//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any part of the retrieval stack.
///
/// Variants are deliberately coarse but distinguishable: callers that need
/// to map failures onto process exit codes (or HTTP statuses) match on the
/// variant, not on the message.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented constraints.
    #[error("config error: {0}")]
    Config(String),

    /// An input (document, query, argument) violates a precondition.
    #[error("input error: {0}")]
    Input(String),

    /// A computation produced a non-finite or otherwise invalid number.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A remote call failed at the transport level (connect, send, receive).
    #[error("transport error: {0}")]
    Transport(String),

    /// A remote call returned a payload that does not match the protocol.
    #[error("malformed response: {0}")]
    MalformedResponse(String),

    /// A remote call exceeded its configured deadline.
    #[error("request timed out: {0}")]
    Timeout(String),

    /// Index construction failed; the message names the offending chunk.
    #[error("index build error: {0}")]
    Build(String),

    /// A persisted index was written by an incompatible format version.
    #[error("index format version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    /// A persisted index file is shorter than its manifest promises.
    #[error("truncated index file: {0}")]
    Truncated(String),

    /// The stored checksum does not match the bytes on disk.
    #[error("index checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    /// Training produced a non-finite loss.
    #[error("training diverged (non-finite loss) at epoch {epoch}, step {step}")]
    Training { epoch: usize, step: usize },

    /// An evaluation input is inconsistent (missing queries, degenerate data).
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// The external reranker failed.
    #[error("rerank error: {0}")]
    Rerank(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that indicate a bad configuration rather than a
    /// runtime failure. Used by the CLI to pick exit code 2 vs 3.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
