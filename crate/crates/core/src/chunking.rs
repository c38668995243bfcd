//! Ensemble splitting: sliding-window chunking at several window sizes
//! with a fixed overlap between adjacent chunks of the same window.
//!
//! For window size `w` and overlap `Δ`, chunks start at offsets
//! `0, (w−Δ), 2(w−Δ), …` and span `[start, min(start+w, len))`;
//! generation stops once a chunk's end reaches the document end. The
//! overlap applies within each window size only (chunks of different
//! windows have no geometric relation). The final chunk is clipped at
//! the document end, never back-shifted, so the `(window, start)`
//! addressing stays injective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{make_chunk_id, Chunk, Document};

/// Sliding-window configuration shared by the index builder and the
/// curation pipeline. Lives under `[chunking]` in the TOML config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkingConfig {
    /// Window sizes in Unicode scalar values. Non-empty, all ≥ 1.
    pub window_sizes: Vec<usize>,
    /// Overlap Δ between consecutive chunks of the same window, in
    /// Unicode scalar values. Must satisfy `overlap < min(window_sizes)`
    /// so the stride `w − Δ` is at least 1.
    #[serde(default)]
    pub overlap: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            window_sizes: vec![128, 256],
            overlap: 32,
        }
    }
}

impl ChunkingConfig {
    pub fn new(window_sizes: impl IntoIterator<Item = usize>, overlap: usize) -> Result<Self> {
        let cfg = ChunkingConfig {
            window_sizes: window_sizes.into_iter().collect(),
            overlap,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Window sizes sorted ascending with duplicates removed.
    pub fn sorted_windows(&self) -> Vec<usize> {
        let mut ws = self.window_sizes.clone();
        ws.sort_unstable();
        ws.dedup();
        ws
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_sizes.is_empty() {
            return Err(Error::Config(
                "chunking.window_sizes must be non-empty".into(),
            ));
        }
        if self.window_sizes.iter().any(|&w| w == 0) {
            return Err(Error::Config(
                "chunking.window_sizes entries must be ≥ 1".into(),
            ));
        }
        let min_w = *self.window_sizes.iter().min().unwrap();
        if self.overlap >= min_w {
            return Err(Error::Config(format!(
                "chunking.overlap ({}) must be < min window size ({min_w})",
                self.overlap
            )));
        }
        Ok(())
    }
}

/// Splits `doc` into overlapping chunks at every configured window size.
///
/// Output is ordered by `(window_size asc, start asc)` and is fully
/// deterministic. For every window size the union of spans is exactly
/// `[0, len)`.
pub fn ensemble_split(doc: &Document, cfg: &ChunkingConfig) -> Result<Vec<Chunk>> {
    cfg.validate()?;
    if doc.text.is_empty() {
        return Err(Error::Input(format!(
            "document '{}' has empty text",
            doc.doc_id
        )));
    }

    // char offset -> byte offset, with a sentinel at the end
    let mut byte_at: Vec<usize> = doc.text.char_indices().map(|(b, _)| b).collect();
    byte_at.push(doc.text.len());
    let len = byte_at.len() - 1;

    let mut chunks = Vec::new();
    for w in cfg.sorted_windows() {
        let stride = w - cfg.overlap;
        let mut start = 0usize;
        let mut last_span = None;
        loop {
            let end = (start + w).min(len);
            // identical spans (possible only through clipping) are suppressed
            if last_span != Some((start, end)) {
                chunks.push(Chunk {
                    chunk_id: make_chunk_id(&doc.doc_id, w, start),
                    doc_id: doc.doc_id.clone(),
                    window_size: w,
                    start,
                    end,
                    text: doc.text[byte_at[start]..byte_at[end]].to_string(),
                });
                last_span = Some((start, end));
            }
            if end >= len {
                break;
            }
            start += stride;
        }
    }
    Ok(chunks)
}

/// Closed-form chunk count for one window over a document of `len` chars:
/// `⌈max(len−Δ, 1) / (w−Δ)⌉` when `len > w`, else 1.
pub fn expected_chunk_count(len: usize, window: usize, overlap: usize) -> usize {
    if len <= window {
        1
    } else {
        let num = (len - overlap).max(1);
        let den = window - overlap;
        num.div_ceil(den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Document {
        Document::new("d", text).unwrap()
    }

    fn spans(chunks: &[Chunk]) -> Vec<(usize, usize, usize)> {
        chunks.iter().map(|c| (c.window_size, c.start, c.end)).collect()
    }

    #[test]
    fn stride_arithmetic_len10_w5_overlap1() {
        let d = doc("0123456789");
        let cfg = ChunkingConfig::new([5], 1).unwrap();
        let out = ensemble_split(&d, &cfg).unwrap();
        assert_eq!(spans(&out), vec![(5, 0, 5), (5, 4, 9), (5, 8, 10)]);
    }

    #[test]
    fn degenerate_window_covers_whole_document() {
        let d = doc("0123456789");
        let cfg = ChunkingConfig::new([10], 0).unwrap();
        let out = ensemble_split(&d, &cfg).unwrap();
        assert_eq!(spans(&out), vec![(10, 0, 10)]);
        assert_eq!(out[0].text, "0123456789");
    }

    #[test]
    fn two_windows_abcdef() {
        let d = doc("abcdef");
        let cfg = ChunkingConfig::new([3, 4], 1).unwrap();
        let out = ensemble_split(&d, &cfg).unwrap();
        assert_eq!(
            spans(&out),
            vec![(3, 0, 3), (3, 2, 5), (3, 4, 6), (4, 0, 4), (4, 3, 6)]
        );
        assert_eq!(out[0].text, "abc");
        assert_eq!(out[4].text, "def");
    }

    #[test]
    fn chunk_ids_match_addressing() {
        let d = doc("abcdef");
        let cfg = ChunkingConfig::new([4], 1).unwrap();
        let out = ensemble_split(&d, &cfg).unwrap();
        assert_eq!(out[0].chunk_id, "d#w4@0");
        assert_eq!(out[1].chunk_id, "d#w4@3");
    }

    #[test]
    fn unicode_offsets_are_scalar_values() {
        // 6 scalar values, multi-byte
        let d = doc("你好世界啊呀");
        let cfg = ChunkingConfig::new([4], 2).unwrap();
        let out = ensemble_split(&d, &cfg).unwrap();
        assert_eq!(spans(&out), vec![(4, 0, 4), (4, 2, 6)]);
        assert_eq!(out[0].text, "你好世界");
        assert_eq!(out[1].text, "世界啊呀");
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(matches!(
            ChunkingConfig::new([3], 3),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ChunkingConfig::new(Vec::<usize>::new(), 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(ChunkingConfig::new([0], 0), Err(Error::Config(_))));
    }

    #[test]
    fn empty_document_is_input_error() {
        let d = Document {
            doc_id: "d".into(),
            title: String::new(),
            text: String::new(),
            metadata: Default::default(),
        };
        let cfg = ChunkingConfig::new([3], 0).unwrap();
        assert!(matches!(ensemble_split(&d, &cfg), Err(Error::Input(_))));
    }

    #[test]
    fn determinism() {
        let d = doc("the quick brown fox jumps over the lazy dog");
        let cfg = ChunkingConfig::new([7, 13], 2).unwrap();
        assert_eq!(
            ensemble_split(&d, &cfg).unwrap(),
            ensemble_split(&d, &cfg).unwrap()
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn closed_form_coverage_and_overlap(
                len in 1usize..400,
                window in 1usize..64,
                overlap in 0usize..64,
            ) {
                prop_assume!(overlap < window);
                let text: String = std::iter::repeat('x').take(len).collect();
                let d = doc(&text);
                let cfg = ChunkingConfig::new([window], overlap).unwrap();
                let out = ensemble_split(&d, &cfg).unwrap();

                // closed-form count
                prop_assert_eq!(out.len(), expected_chunk_count(len, window, overlap));

                // coverage: every offset in some chunk
                let mut covered = vec![false; len];
                for c in &out {
                    for slot in covered.iter_mut().take(c.end).skip(c.start) {
                        *slot = true;
                    }
                }
                prop_assert!(covered.iter().all(|&b| b));

                // consecutive chunks of the same window overlap by exactly Δ
                // (only the end can be clipped, never a start)
                for pair in out.windows(2) {
                    let inter = pair[0].end.min(pair[1].end).saturating_sub(pair[1].start);
                    prop_assert_eq!(inter, overlap);
                }
            }
        }
    }
}
