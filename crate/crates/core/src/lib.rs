//! Hierarchical hybrid retrieval over chunked documents.
//!
//! The crate covers the full retrieval stack for a domain corpus:
//!
//! - **chunking** — ensemble splitting at several window sizes with a
//!   fixed overlap, addressed by `(doc_id, window, start)`;
//! - **keywords** — embedding-scored candidate n-grams diversified with
//!   maximal marginal relevance, plus keyword-set similarity;
//! - **embedding** — pluggable providers (deterministic feature hashing,
//!   remote HTTP service, projection-head wrapper);
//! - **training** — contrastive fine-tuning of a linear projection head
//!   with an InfoNCE loss KL-anchored to the frozen head;
//! - **index** — a flat, exactly-scanned vector index with keyword maps
//!   and bit-exact persistence;
//! - **search** — dual recall (keyword + semantic), keyword-overlap
//!   scoring and late-interaction reranking;
//! - **curation** — the five-stage instruction curation pipeline
//!   (split, score, self-ask, filter, k-center diversity selection);
//! - **eval** — score@k, Spearman correlation, and the ablation runner.
//!
//! Core vector math is generic over the scalar type (see [`num`]); the
//! aliases below pin the two precisions used in practice: f64 for
//! provider output and training, f32 for index storage.

pub mod chunking;
pub mod curation;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod index;
pub mod ingest;
pub mod keywords;
pub mod num;
pub mod search;
pub mod training;
pub mod types;

pub use embedding::{cosine_sim, Embedding, ProjectionHead, TextEmbedder};
pub use error::{Error, Result};
pub use types::{make_chunk_id, Chunk, Document, ScoredChunk};

/// Index storage precision.
pub type Embedding32 = Embedding<f32>;
/// Provider output and training precision.
pub type Embedding64 = Embedding<f64>;
