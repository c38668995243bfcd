//! Hierarchical search: dual recall, overlap scoring, reranking.
//!
//! Query processing over an [`Index`]:
//!
//! 1. embed the query and extract its keywords;
//! 2. recall the top ⌈x/2⌉ chunks by keyword-set similarity (list A)
//!    and the top ⌊x/2⌋ by embedding cosine (list B);
//! 3. deduplicate A ∪ B by chunk id — a chunk recalled by both routes
//!    is scored once, never double-counted;
//! 4. count exact keyword overlaps and compute a cross score per
//!    candidate (late interaction by default: mean over query tokens of
//!    the max token-embedding cosine against the chunk's tokens — a
//!    deterministic stand-in for a cross-attention reranker);
//! 5. rank by `α·norm(cross) + (1−α)·norm(overlap)`, each term divided
//!    by the candidate-set maximum (0 if the maximum is 0), ties broken
//!    by semantic score then chunk id.
//!
//! An external cross-encoder can be attached via the `external` rerank
//! mode (`POST /score {"query","text"}` → `{"score"}`); if it fails the
//! search falls back to `none` (cross = semantic) and flags the
//! response as degraded. External calls run sequentially.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_sim, Embedding, TextEmbedder};
use crate::error::{Error, Result};
use crate::index::Index;
use crate::keywords::{KeywordExtractor, SimilarityMode};
use crate::types::{Chunk, ScoredChunk};

/// The `[search]` section of the unified config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Total recall budget x: list A gets ⌈x/2⌉ slots, list B ⌊x/2⌋.
    pub x: usize,
    /// Cross-score weight α in [0, 1].
    pub alpha: f64,
    /// "late-interaction" | "none" | "external"
    pub rerank: String,
    /// Keywords extracted from the query.
    pub query_k: usize,
    /// Scorer base URL for rerank = "external".
    pub external_endpoint: String,
    pub timeout_ms: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            x: 10,
            alpha: 0.5,
            rerank: "late-interaction".into(),
            query_k: 5,
            external_endpoint: String::new(),
            timeout_ms: 5_000,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.x == 0 {
            return Err(Error::Config("search.x must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(Error::Config("search.alpha must lie in [0, 1]".into()));
        }
        if self.query_k == 0 {
            return Err(Error::Config("search.query_k must be ≥ 1".into()));
        }
        match self.rerank.as_str() {
            "late-interaction" | "none" => Ok(()),
            "external" if !self.external_endpoint.is_empty() => Ok(()),
            "external" => Err(Error::Config(
                "search.external_endpoint required for rerank = \"external\"".into(),
            )),
            other => Err(Error::Config(format!(
                "search.rerank must be late-interaction|none|external, got '{other}'"
            ))),
        }
    }
}

/// Ranked results plus a degradation flag (true when the external
/// reranker failed and the search fell back to `none`).
#[derive(Debug, Clone, Serialize)]
pub struct SearchResponse {
    pub results: Vec<ScoredChunk>,
    pub degraded: bool,
}

/// Reranker score for one query/chunk pair.
///
/// `late-interaction`: mean over query tokens of the max cosine between
/// token embeddings. `none`: the plain query/chunk cosine. `external`:
/// remote scorer (transport failure → [`Error::Rerank`]).
pub fn cross_score(
    query: &str,
    chunk: &Chunk,
    embedder: &dyn TextEmbedder,
    cfg: &SearchConfig,
) -> Result<f64> {
    match cfg.rerank.as_str() {
        "none" => {
            let q = embedder.embed(query)?;
            let c = embedder.embed(&chunk.text)?;
            Ok(cosine_sim(&q, &c)?)
        }
        "late-interaction" => {
            let mut cache = TokenCache::new(embedder);
            late_interaction(query, &chunk.text, &mut cache)
        }
        "external" => ExternalScorer::new(cfg)?.score(query, &chunk.text),
        other => Err(Error::Config(format!("unknown rerank mode '{other}'"))),
    }
}

/// Algorithm: dual recall, overlap scoring, rerank, final ranking.
/// Returns every candidate (≤ x), descending final score; callers
/// truncate.
pub fn hierarchical_search(
    query: &str,
    index: &Index,
    cfg: &SearchConfig,
    embedder: &dyn TextEmbedder,
) -> Result<SearchResponse> {
    cfg.validate()?;
    if query.is_empty() {
        return Err(Error::Input("query is empty".into()));
    }
    if index.is_empty() {
        return Err(Error::Input("index is empty".into()));
    }
    index.check_fingerprint(embedder)?;

    // query representations
    let query_emb = embedder.embed(query)?;
    let kw_cfg = &index.manifest().keywords;
    let extractor = KeywordExtractor::from_config(kw_cfg)?.with_k(cfg.query_k);
    let query_kws = extractor.extract(query, embedder)?;
    let sim_mode = if kw_cfg.similarity == "soft" {
        SimilarityMode::Soft
    } else {
        SimilarityMode::Jaccard
    };
    let soft_embedder = (sim_mode == SimilarityMode::Soft).then_some(embedder);

    let semantic = index.semantic_scores(&query_emb)?;
    let keyword = index.keyword_scores(&query_kws, sim_mode, soft_embedder)?;

    // dual recall: A = top ⌈x/2⌉ keyword, B = top ⌊x/2⌋ semantic
    let a_budget = cfg.x.div_ceil(2);
    let b_budget = cfg.x / 2;
    let a = top_indices(index, &keyword, a_budget);
    let b = top_indices(index, &semantic, b_budget);

    // union, deduplicated by chunk id (each chunk contributes once)
    let mut candidates: Vec<usize> = Vec::with_capacity(a.len() + b.len());
    for i in a.into_iter().chain(b) {
        if !candidates.contains(&i) {
            candidates.push(i);
        }
    }

    // exact keyword-overlap counts
    let overlaps: Vec<usize> = candidates
        .iter()
        .map(|&i| {
            let set = index
                .keyword_set(&index.chunks()[i].chunk_id)
                .expect("chunk has keywords");
            query_kws.iter().filter(|kw| set.contains(kw)).count()
        })
        .collect();

    // cross scores; external failures degrade to the semantic score
    let mut degraded = false;
    let cross: Vec<f64> = match cfg.rerank.as_str() {
        "none" => candidates.iter().map(|&i| semantic[i]).collect(),
        "late-interaction" => {
            let mut cache = TokenCache::new(embedder);
            candidates
                .iter()
                .map(|&i| late_interaction(query, &index.chunks()[i].text, &mut cache))
                .collect::<Result<_>>()?
        }
        "external" => {
            let scorer = ExternalScorer::new(cfg)?;
            let mut out = Vec::with_capacity(candidates.len());
            for &i in &candidates {
                match scorer.score(query, &index.chunks()[i].text) {
                    Ok(s) => out.push(s),
                    Err(Error::Rerank(_) | Error::Transport(_) | Error::Timeout(_)) => {
                        degraded = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if degraded {
                candidates.iter().map(|&i| semantic[i]).collect()
            } else {
                out
            }
        }
        other => return Err(Error::Config(format!("unknown rerank mode '{other}'"))),
    };

    // final score: max-normalized convex combination, clamped to [0, 1]
    let max_cross = cross.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max_overlap = overlaps.iter().max().copied().unwrap_or(0);
    let norm_cross = |c: f64| {
        if max_cross > 0.0 {
            (c / max_cross).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    let norm_overlap = |o: usize| {
        if max_overlap > 0 {
            o as f64 / max_overlap as f64
        } else {
            0.0
        }
    };

    let mut results: Vec<ScoredChunk> = candidates
        .iter()
        .enumerate()
        .map(|(slot, &i)| ScoredChunk {
            chunk: index.chunks()[i].clone(),
            semantic_score: semantic[i],
            keyword_score: keyword[i],
            overlap_count: overlaps[slot],
            cross_score: cross[slot],
            final_score: cfg.alpha * norm_cross(cross[slot])
                + (1.0 - cfg.alpha) * norm_overlap(overlaps[slot]),
        })
        .collect();

    results.sort_by(|x, y| {
        y.final_score
            .partial_cmp(&x.final_score)
            .expect("finite scores")
            .then_with(|| {
                y.semantic_score
                    .partial_cmp(&x.semantic_score)
                    .expect("finite scores")
            })
            .then_with(|| x.chunk.chunk_id.cmp(&y.chunk.chunk_id))
    });
    Ok(SearchResponse { results, degraded })
}

/// Indices of the top-k scores; ties broken by chunk id ascending.
fn top_indices(index: &Index, scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite scores")
            .then_with(|| index.chunks()[a].chunk_id.cmp(&index.chunks()[b].chunk_id))
    });
    order.truncate(k);
    order
}

/// Splits into the same units as keyword extraction: whitespace tokens,
/// or characters when the text has no whitespace.
fn tokenize(text: &str) -> Vec<String> {
    if text.chars().any(char::is_whitespace) {
        text.split_whitespace().map(str::to_string).collect()
    } else {
        text.chars().map(String::from).collect()
    }
}

struct TokenCache<'a> {
    embedder: &'a dyn TextEmbedder,
    cache: HashMap<String, Embedding<f64>>,
}

impl<'a> TokenCache<'a> {
    fn new(embedder: &'a dyn TextEmbedder) -> Self {
        TokenCache {
            embedder,
            cache: HashMap::new(),
        }
    }

    fn get(&mut self, token: &str) -> Result<Embedding<f64>> {
        if let Some(e) = self.cache.get(token) {
            return Ok(e.clone());
        }
        let e = self.embedder.embed(token)?;
        self.cache.insert(token.to_string(), e.clone());
        Ok(e)
    }
}

/// MaxSim-style alignment: mean over query tokens of the best cosine
/// against any chunk token.
fn late_interaction(query: &str, chunk_text: &str, cache: &mut TokenCache) -> Result<f64> {
    let q_tokens = tokenize(query);
    let c_tokens = tokenize(chunk_text);
    if q_tokens.is_empty() || c_tokens.is_empty() {
        return Ok(0.0);
    }
    let c_embs: Vec<Embedding<f64>> = c_tokens
        .iter()
        .map(|t| cache.get(t))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for qt in &q_tokens {
        let qe = cache.get(qt)?;
        let mut best = f64::NEG_INFINITY;
        for ce in &c_embs {
            best = best.max(cosine_sim(&qe, ce)?);
        }
        total += best;
    }
    Ok(total / q_tokens.len() as f64)
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    query: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

struct ExternalScorer {
    client: reqwest::blocking::Client,
    endpoint: String,
}

impl ExternalScorer {
    fn new(cfg: &SearchConfig) -> Result<Self> {
        if cfg.external_endpoint.is_empty() {
            return Err(Error::Config("external scorer endpoint is empty".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| Error::Rerank(e.to_string()))?;
        Ok(ExternalScorer {
            client,
            endpoint: cfg.external_endpoint.trim_end_matches('/').to_string(),
        })
    }

    fn score(&self, query: &str, text: &str) -> Result<f64> {
        let url = format!("{}/score", self.endpoint);
        let resp = self
            .client
            .post(&url)
            .json(&ScoreRequest { query, text })
            .send()
            .map_err(|e| Error::Rerank(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(Error::Rerank(format!(
                "{url} returned HTTP {}",
                resp.status()
            )));
        }
        let body: ScoreResponse = resp
            .json()
            .map_err(|e| Error::Rerank(format!("malformed scorer response: {e}")))?;
        if !body.score.is_finite() {
            return Err(Error::Rerank("scorer returned a non-finite score".into()));
        }
        Ok(body.score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::ChunkingConfig;
    use crate::embedding::HashEmbedder;
    use crate::index::build_index;
    use crate::keywords::KeywordsConfig;
    use crate::types::{make_chunk_id, Document};

    const DIMS: usize = 64;

    fn embedder() -> HashEmbedder {
        HashEmbedder::new(DIMS).unwrap()
    }

    /// Ten single-chunk docs with distinct token content.
    fn fixture_docs() -> Vec<Document> {
        let texts = [
            "riverside park needs new benches and lighting",
            "zoning variance hearings resume next month downtown",
            "wetland buffer rules protect heron nesting sites",
            "freight corridor upgrades cut crossing delays",
            "affordable housing pilot adds thirty units",
            "storm drainage basins overflow during spring rain",
            "transit oriented blocks gain mixed retail space",
            "heritage facades require masonry restoration permits",
            "bicycle greenway links campus with market square",
            "industrial rooftops host community solar panels",
        ];
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("doc{i:02}"), *t).unwrap())
            .collect()
    }

    fn fixture_index() -> Index {
        let chunking = ChunkingConfig::new([64], 0).unwrap();
        let kw = KeywordsConfig {
            k: 5,
            ..KeywordsConfig::default()
        };
        build_index(&fixture_docs(), &chunking, &kw, &embedder()).unwrap()
    }

    #[test]
    fn planted_duplicate_ranks_first_with_unit_semantic_score() {
        let idx = fixture_index();
        let query = "wetland buffer rules protect heron nesting sites";
        let cfg = SearchConfig::default();
        let got = hierarchical_search(query, &idx, &cfg, &embedder()).unwrap();
        assert!(!got.degraded);
        let top = &got.results[0];
        assert_eq!(top.chunk.doc_id, "doc02");
        assert!(
            (top.semantic_score - 1.0).abs() < 1e-6,
            "semantic {}",
            top.semantic_score
        );
        // maximal overlap: every query keyword appears in its chunk set
        let max_overlap = got.results.iter().map(|r| r.overlap_count).max().unwrap();
        assert_eq!(top.overlap_count, max_overlap);
    }

    #[test]
    fn candidate_set_bounded_and_unique() {
        let idx = fixture_index();
        let cfg = SearchConfig {
            x: 7,
            ..SearchConfig::default()
        };
        let got = hierarchical_search("riverside park benches", &idx, &cfg, &embedder()).unwrap();
        assert!(got.results.len() <= 7);
        let mut ids: Vec<&str> = got
            .results
            .iter()
            .map(|r| r.chunk.chunk_id.as_str())
            .collect();
        let before = ids.len();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), before, "duplicate chunk ids in results");
    }

    #[test]
    fn stopword_query_with_alpha_one_ranks_by_cross_score() {
        // keyword extraction yields an empty set for a stopword-only
        // query; with α=1 the ranking is pure normalized cross score
        let idx = fixture_index();
        let cfg = SearchConfig {
            alpha: 1.0,
            ..SearchConfig::default()
        };
        let got = hierarchical_search("the of and", &idx, &cfg, &embedder()).unwrap();
        for r in &got.results {
            assert_eq!(r.overlap_count, 0);
            assert_eq!(r.keyword_score, 0.0);
        }
        // ranking must be non-increasing in cross score
        for w in got.results.windows(2) {
            assert!(w[0].cross_score >= w[1].cross_score - 1e-12);
        }
    }

    #[test]
    fn alpha_zero_equal_overlaps_fall_back_to_semantic_order() {
        let idx = fixture_index();
        let cfg = SearchConfig {
            alpha: 0.0,
            ..SearchConfig::default()
        };
        // no query keyword appears anywhere: all overlaps 0
        let got = hierarchical_search("qqxx zzyy", &idx, &cfg, &embedder()).unwrap();
        for r in &got.results {
            assert_eq!(r.overlap_count, 0);
            assert_eq!(r.final_score, 0.0);
        }
        for w in got.results.windows(2) {
            assert!(w[0].semantic_score >= w[1].semantic_score);
        }
    }

    #[test]
    fn search_is_deterministic() {
        let idx = fixture_index();
        let cfg = SearchConfig::default();
        let a = hierarchical_search("storm drainage overflow", &idx, &cfg, &embedder()).unwrap();
        let b = hierarchical_search("storm drainage overflow", &idx, &cfg, &embedder()).unwrap();
        let ids = |r: &SearchResponse| {
            r.results
                .iter()
                .map(|s| (s.chunk.chunk_id.clone(), s.final_score))
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn fingerprint_mismatch_is_config_error() {
        let idx = fixture_index();
        let wrong = HashEmbedder::new(DIMS * 2).unwrap();
        assert!(matches!(
            hierarchical_search("x", &idx, &SearchConfig::default(), &wrong),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn overlap_gain_never_lowers_rank_at_alpha_zero() {
        // rebuild the fixture with one document enriched by a query
        // keyword; its rank under α=0 must not get worse
        let query = "heron wetland greenway";
        let cfg = SearchConfig {
            alpha: 0.0,
            x: 10,
            ..SearchConfig::default()
        };
        let chunking = ChunkingConfig::new([64], 0).unwrap();
        let kwcfg = KeywordsConfig {
            k: 5,
            ..KeywordsConfig::default()
        };

        let rank_of = |docs: &[Document], doc_id: &str| -> usize {
            let idx = build_index(docs, &chunking, &kwcfg, &embedder()).unwrap();
            let got = hierarchical_search(query, &idx, &cfg, &embedder()).unwrap();
            got.results
                .iter()
                .position(|r| r.chunk.doc_id == doc_id)
                .unwrap_or(usize::MAX)
        };

        let base = fixture_docs();
        let mut enriched = fixture_docs();
        // doc08 is the bicycle greenway doc; add a second query keyword
        enriched[8].text = format!("{} heron", enriched[8].text);

        let before = rank_of(&base, "doc08");
        let after = rank_of(&enriched, "doc08");
        assert!(
            after <= before,
            "rank worsened after gaining a keyword: {before} -> {after}"
        );
    }

    mod cross {
        use super::*;

        #[test]
        fn verbatim_token_chunk_scores_one() {
            let idx = fixture_index();
            let chunk = idx.chunk_by_id("doc00#w64@0").unwrap();
            let cfg = SearchConfig::default();
            // every query token appears verbatim in the chunk
            let s = cross_score("riverside park benches", chunk, &embedder(), &cfg).unwrap();
            assert!((s - 1.0).abs() < 1e-9, "score {s}");
        }

        #[test]
        fn orthogonal_tokens_score_zero() {
            // single-char tokens hash to single disjoint buckets
            let doc = Document::new("z", "a b").unwrap();
            let chunking = ChunkingConfig::new([3], 0).unwrap();
            let idx = build_index(
                &[doc],
                &chunking,
                &KeywordsConfig::default(),
                &embedder(),
            )
            .unwrap();
            let chunk = &idx.chunks()[0];
            let cfg = SearchConfig::default();
            let s = cross_score("c d", chunk, &embedder(), &cfg).unwrap();
            assert_eq!(s, 0.0);
        }

        #[test]
        fn four_by_six_token_alignment_matches_bruteforce() {
            let emb = embedder();
            let query = "parks shade benches lighting";
            let chunk_text = "riverside parks offer shade and benches";
            let doc = Document::new("y", chunk_text).unwrap();
            let chunking = ChunkingConfig::new([64], 0).unwrap();
            let idx =
                build_index(&[doc], &chunking, &KeywordsConfig::default(), &emb).unwrap();
            let cfg = SearchConfig::default();
            let got = cross_score(query, &idx.chunks()[0], &emb, &cfg).unwrap();

            // exhaustive token-pair max/mean
            let q_tokens: Vec<&str> = query.split_whitespace().collect();
            let c_tokens: Vec<&str> = chunk_text.split_whitespace().collect();
            assert_eq!((q_tokens.len(), c_tokens.len()), (4, 6));
            let mut total = 0.0;
            for qt in &q_tokens {
                let qe = emb.embed(qt).unwrap();
                let best = c_tokens
                    .iter()
                    .map(|ct| cosine_sim(&qe, &emb.embed(ct).unwrap()).unwrap())
                    .fold(f64::NEG_INFINITY, f64::max);
                total += best;
            }
            let expected = total / q_tokens.len() as f64;
            assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        }

        #[test]
        fn none_mode_returns_semantic_score() {
            let idx = fixture_index();
            let chunk = idx.chunk_by_id("doc03#w64@0").unwrap();
            let cfg = SearchConfig {
                rerank: "none".into(),
                ..SearchConfig::default()
            };
            let emb = embedder();
            let got = cross_score("freight crossing", chunk, &emb, &cfg).unwrap();
            let q = emb.embed("freight crossing").unwrap();
            let c = emb.embed(&chunk.text).unwrap();
            assert_eq!(got, cosine_sim(&q, &c).unwrap());
        }
    }
}
