//! Build-time retrieval artifacts: a flat vector index over chunk
//! embeddings plus a chunk → keyword-set map, persisted bit-exactly.
//!
//! The index is an exact brute-force scan — no ANN structure. Vectors
//! are stored as little-endian f32 in row-major order and scored with
//! f64 accumulation, so results are identical before and after a
//! save/load round trip. Chunk order is the canonical
//! `(doc_id, window_size, start)` sort.
//!
//! On-disk layout (versioned):
//!
//! ```text
//! index_dir/
//!   manifest.json   version, dims, count, embedder fingerprint,
//!                   chunking + keyword config, CRC32 of vectors.bin
//!   vectors.bin     count × dims little-endian f32, row-major
//!   keywords.json   chunk_id → [keyword, ...]
//!   chunks.jsonl    one chunk per line
//! ```

use std::collections::BTreeSet;
use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunking::{ensemble_split, ChunkingConfig};
use crate::embedding::{Embedding, TextEmbedder};
use crate::error::{Error, Result};
use crate::keywords::{
    keyword_set_similarity, KeywordExtractor, KeywordSet, KeywordsConfig, SimilarityMode,
};
use crate::types::{Chunk, Document};

pub const FORMAT_VERSION: u32 = 1;

const MANIFEST_FILE: &str = "manifest.json";
const VECTORS_FILE: &str = "vectors.bin";
const KEYWORDS_FILE: &str = "keywords.json";
const CHUNKS_FILE: &str = "chunks.jsonl";

/// Everything needed to validate and reproduce an index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    pub dims: usize,
    pub count: usize,
    pub embedder_fingerprint: String,
    pub chunking: ChunkingConfig,
    pub keywords: KeywordsConfig,
    pub vectors_crc32: u32,
}

/// Immutable flat index; all queries are read-only and thread-safe.
#[derive(Debug, Clone)]
pub struct Index {
    chunks: Vec<Chunk>,
    /// Row-major `count × dims`, L2-normalized rows.
    vectors: Vec<f32>,
    keyword_map: BTreeMap<String, KeywordSet>,
    manifest: IndexManifest,
    by_id: HashMap<String, usize>,
}

impl Index {
    pub fn manifest(&self) -> &IndexManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.manifest.dims
    }

    /// Chunks in canonical `(doc_id, window_size, start)` order.
    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk_by_id(&self, chunk_id: &str) -> Option<&Chunk> {
        self.by_id.get(chunk_id).map(|&i| &self.chunks[i])
    }

    pub fn keyword_set(&self, chunk_id: &str) -> Option<&KeywordSet> {
        self.keyword_map.get(chunk_id)
    }

    fn row(&self, i: usize) -> &[f32] {
        let d = self.manifest.dims;
        &self.vectors[i * d..(i + 1) * d]
    }

    /// Errors unless the query-time embedder matches the one the index
    /// was built with.
    pub fn check_fingerprint(&self, embedder: &dyn TextEmbedder) -> Result<()> {
        let fp = embedder.fingerprint();
        if fp != self.manifest.embedder_fingerprint {
            return Err(Error::Config(format!(
                "embedder fingerprint mismatch: index built with '{}', query uses '{fp}'",
                self.manifest.embedder_fingerprint
            )));
        }
        Ok(())
    }

    /// Cosine of the query against every chunk, in chunk order. Stored
    /// f32 values, f64 accumulation, clamped to [-1, 1].
    pub fn semantic_scores(&self, query: &Embedding<f64>) -> Result<Vec<f64>> {
        if query.dims() != self.manifest.dims {
            return Err(Error::Input(format!(
                "query dims {} != index dims {}",
                query.dims(),
                self.manifest.dims
            )));
        }
        let q32: Vec<f32> = query.values().iter().map(|&v| v as f32).collect();
        Ok((0..self.len())
            .map(|i| {
                let dot: f64 = self
                    .row(i)
                    .iter()
                    .zip(&q32)
                    .map(|(&a, &b)| a as f64 * b as f64)
                    .sum();
                dot.clamp(-1.0, 1.0)
            })
            .collect())
    }

    /// Keyword-set similarity of the query set against every chunk.
    pub fn keyword_scores(
        &self,
        query_keywords: &KeywordSet,
        mode: SimilarityMode,
        embedder: Option<&dyn TextEmbedder>,
    ) -> Result<Vec<f64>> {
        self.chunks
            .iter()
            .map(|c| {
                let set = self
                    .keyword_map
                    .get(&c.chunk_id)
                    .expect("every chunk has a keyword set");
                keyword_set_similarity(query_keywords, set, mode, embedder)
            })
            .collect()
    }

    /// Exact top-k by cosine; ties broken by chunk_id ascending. Returns
    /// `min(k, n)` results.
    pub fn top_k_semantic(&self, query: &Embedding<f64>, k: usize) -> Result<Vec<(String, f64)>> {
        let scores = self.semantic_scores(query)?;
        Ok(self.rank_top_k(&scores, k))
    }

    /// Top-k by keyword-set similarity; zero-score chunks still fill up
    /// to `min(k, n)`, ranked by chunk_id.
    pub fn top_k_keyword(
        &self,
        query_keywords: &KeywordSet,
        k: usize,
        mode: SimilarityMode,
        embedder: Option<&dyn TextEmbedder>,
    ) -> Result<Vec<(String, f64)>> {
        let scores = self.keyword_scores(query_keywords, mode, embedder)?;
        Ok(self.rank_top_k(&scores, k))
    }

    fn rank_top_k(&self, scores: &[f64], k: usize) -> Vec<(String, f64)> {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .expect("scores are finite")
                .then_with(|| self.chunks[a].chunk_id.cmp(&self.chunks[b].chunk_id))
        });
        order
            .into_iter()
            .take(k)
            .map(|i| (self.chunks[i].chunk_id.clone(), scores[i]))
            .collect()
    }

    /// Derives an index with every stored vector passed through a
    /// projection head (chunks and keyword sets are shared). The
    /// fingerprint becomes the projected-embedder fingerprint, so
    /// queries must come from the matching [`ProjectedEmbedder`].
    ///
    /// [`ProjectedEmbedder`]: crate::embedding::ProjectedEmbedder
    pub fn project_through(&self, head: &crate::embedding::ProjectionHead) -> Result<Index> {
        head.validate()?;
        if head.d_in != self.manifest.dims {
            return Err(Error::Config(format!(
                "head d_in {} != index dims {}",
                head.d_in, self.manifest.dims
            )));
        }
        let mut vectors = Vec::with_capacity(self.len() * head.d_out);
        for i in 0..self.len() {
            let row64: Vec<f64> = self.row(i).iter().map(|&v| v as f64).collect();
            let mut y = head.affine(&row64);
            crate::num::normalize_in_place(&mut y).ok_or_else(|| {
                Error::Numeric(format!(
                    "head maps chunk '{}' to a zero vector",
                    self.chunks[i].chunk_id
                ))
            })?;
            vectors.extend(y.into_iter().map(|v| v as f32));
        }
        let manifest = IndexManifest {
            dims: head.d_out,
            embedder_fingerprint: format!(
                "proj:{}+head:{}",
                self.manifest.embedder_fingerprint,
                head.fingerprint()
            ),
            vectors_crc32: 0,
            ..self.manifest.clone()
        };
        Ok(Index {
            chunks: self.chunks.clone(),
            vectors,
            keyword_map: self.keyword_map.clone(),
            manifest,
            by_id: self.by_id.clone(),
        })
    }

    /// Writes the four index files; the same index always produces
    /// byte-identical output.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;

        let mut vec_bytes = Vec::with_capacity(self.vectors.len() * 4);
        for v in &self.vectors {
            vec_bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(dir.join(VECTORS_FILE), &vec_bytes)?;

        let manifest = IndexManifest {
            vectors_crc32: crc32fast::hash(&vec_bytes),
            ..self.manifest.clone()
        };
        std::fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&manifest)?,
        )?;

        let kw: BTreeMap<&String, &[String]> = self
            .keyword_map
            .iter()
            .map(|(k, v)| (k, v.as_slice()))
            .collect();
        std::fs::write(dir.join(KEYWORDS_FILE), serde_json::to_string_pretty(&kw)?)?;

        let mut lines = Vec::new();
        for c in &self.chunks {
            serde_json::to_writer(&mut lines, c)?;
            lines.write_all(b"\n")?;
        }
        std::fs::write(dir.join(CHUNKS_FILE), &lines)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Index> {
        let manifest_raw = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: IndexManifest = serde_json::from_str(&manifest_raw)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: manifest.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if manifest.count == 0 {
            return Err(Error::Input("index contains no chunks".into()));
        }

        let vec_bytes = std::fs::read(dir.join(VECTORS_FILE))?;
        let expected_len = manifest.count * manifest.dims * 4;
        if vec_bytes.len() != expected_len {
            return Err(Error::Truncated(format!(
                "vectors.bin holds {} bytes, manifest promises {expected_len}",
                vec_bytes.len()
            )));
        }
        let computed = crc32fast::hash(&vec_bytes);
        if computed != manifest.vectors_crc32 {
            return Err(Error::Checksum {
                stored: manifest.vectors_crc32,
                computed,
            });
        }
        let vectors: Vec<f32> = vec_bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();

        let kw_raw = std::fs::read_to_string(dir.join(KEYWORDS_FILE))?;
        let kw_lists: BTreeMap<String, Vec<String>> = serde_json::from_str(&kw_raw)?;
        let keyword_map: BTreeMap<String, KeywordSet> = kw_lists
            .into_iter()
            .map(|(k, v)| (k, KeywordSet::from_raw(v)))
            .collect();

        let chunks_raw = std::fs::read_to_string(dir.join(CHUNKS_FILE))?;
        let mut chunks = Vec::with_capacity(manifest.count);
        for line in chunks_raw.lines() {
            if line.trim().is_empty() {
                continue;
            }
            chunks.push(serde_json::from_str::<Chunk>(line)?);
        }
        if chunks.len() != manifest.count {
            return Err(Error::Truncated(format!(
                "chunks.jsonl holds {} chunks, manifest promises {}",
                chunks.len(),
                manifest.count
            )));
        }
        if keyword_map.len() != manifest.count {
            return Err(Error::Truncated(format!(
                "keywords.json holds {} entries, manifest promises {}",
                keyword_map.len(),
                manifest.count
            )));
        }
        let by_id = build_id_map(&chunks)?;
        Ok(Index {
            chunks,
            vectors,
            keyword_map,
            manifest,
            by_id,
        })
    }
}

fn build_id_map(chunks: &[Chunk]) -> Result<HashMap<String, usize>> {
    let mut by_id = HashMap::with_capacity(chunks.len());
    for (i, c) in chunks.iter().enumerate() {
        if by_id.insert(c.chunk_id.clone(), i).is_some() {
            return Err(Error::Input(format!("duplicate chunk_id '{}'", c.chunk_id)));
        }
    }
    Ok(by_id)
}

/// Splits, embeds, and keyword-extracts every document into an index.
/// Deterministic given inputs; provider failures name the chunk.
pub fn build_index(
    docs: &[Document],
    chunking: &ChunkingConfig,
    keywords_cfg: &KeywordsConfig,
    embedder: &dyn TextEmbedder,
) -> Result<Index> {
    if docs.is_empty() {
        return Err(Error::Input(
            "cannot build an index from zero documents".into(),
        ));
    }
    chunking.validate()?;
    let extractor = KeywordExtractor::from_config(keywords_cfg)?;

    let mut ids = BTreeSet::new();
    for d in docs {
        if !ids.insert(&d.doc_id) {
            return Err(Error::Input(format!("duplicate doc_id '{}'", d.doc_id)));
        }
    }

    let mut chunks: Vec<Chunk> = Vec::new();
    for doc in docs {
        chunks.extend(ensemble_split(doc, chunking)?);
    }
    chunks.sort_by(|a, b| {
        (&a.doc_id, a.window_size, a.start).cmp(&(&b.doc_id, b.window_size, b.start))
    });

    let dims = embedder.dims();
    let mut vectors = Vec::with_capacity(chunks.len() * dims);
    let mut keyword_map = BTreeMap::new();
    for chunk in &chunks {
        let emb = embedder
            .embed(&chunk.text)
            .map_err(|e| Error::Build(format!("embedding chunk '{}': {e}", chunk.chunk_id)))?;
        vectors.extend(emb.to_f32());
        let kws = extractor
            .extract(&chunk.text, embedder)
            .map_err(|e| Error::Build(format!("keywords for chunk '{}': {e}", chunk.chunk_id)))?;
        keyword_map.insert(chunk.chunk_id.clone(), kws);
    }

    let manifest = IndexManifest {
        format_version: FORMAT_VERSION,
        dims,
        count: chunks.len(),
        embedder_fingerprint: embedder.fingerprint(),
        chunking: chunking.clone(),
        keywords: keywords_cfg.clone(),
        vectors_crc32: 0, // computed at save time
    };
    let by_id = build_id_map(&chunks)?;
    Ok(Index {
        chunks,
        vectors,
        keyword_map,
        manifest,
        by_id,
    })
}
