//! Shared domain types: documents, chunks, scored search results.
//!
//! All offsets and window sizes are measured in Unicode scalar values
//! (`char`s), never bytes or words, so the same arithmetic works for
//! whitespace-delimited and CJK text. Identifier comparisons are exact
//! byte comparisons everywhere.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A source document. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    /// Opaque identifier, unique within a corpus.
    pub doc_id: String,
    /// May be empty.
    #[serde(default)]
    pub title: String,
    pub text: String,
    /// Flat string map; nested metadata is out of scope.
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let doc_id = doc_id.into();
        let text = text.into();
        if text.is_empty() {
            return Err(Error::Input(format!("document '{doc_id}' has empty text")));
        }
        Ok(Document {
            doc_id,
            title: String::new(),
            text,
            metadata: BTreeMap::new(),
        })
    }

    /// Length in Unicode scalar values.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// A contiguous document span produced by ensemble splitting.
///
/// Addressed by `(doc_id, window_size, start)`; `chunk_id` is the
/// deterministic rendering `doc_id#w{window_size}@{start}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    /// Window size in Unicode scalar values, ≥ 1.
    pub window_size: usize,
    /// Inclusive start offset in Unicode scalar values.
    pub start: usize,
    /// Exclusive end offset; `start < end ≤ document length`.
    pub end: usize,
    /// The substring of the parent document covering `[start, end)`.
    pub text: String,
}

impl Chunk {
    pub fn char_len(&self) -> usize {
        self.end - self.start
    }
}

/// Renders the deterministic chunk identifier `doc_id#w{window}@{start}`.
///
/// Injective over `(doc_id, window_size, start)`: the suffix parses
/// unambiguously because `window_size` and `start` are plain decimal
/// digit runs anchored at the final `@`.
pub fn make_chunk_id(doc_id: &str, window_size: usize, start: usize) -> String {
    format!("{doc_id}#w{window_size}@{start}")
}

/// One search result: a chunk plus every score the ranking pipeline
/// computed for it.
#[derive(Debug, Clone, Serialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    /// Cosine of query and chunk embeddings, clamped to [-1, 1].
    pub semantic_score: f64,
    /// Keyword-set similarity of query and chunk, in [0, 1].
    pub keyword_score: f64,
    /// Number of query keywords that appear verbatim in the chunk's
    /// keyword set; never exceeds the query keyword count.
    pub overlap_count: usize,
    /// Reranker score (late interaction by default).
    pub cross_score: f64,
    /// Max-normalized convex combination of cross and overlap, in [0, 1].
    pub final_score: f64,
}
