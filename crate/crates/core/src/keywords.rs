//! Keyword extraction and keyword-set similarity.
//!
//! Extraction scores candidate n-grams by cosine similarity of their
//! embedding to the full-text embedding, then picks `k` winners with
//! maximal marginal relevance (MMR): each step takes
//! `argmax λ·relevance − (1−λ)·max-similarity-to-already-selected`,
//! ties broken by lexicographic candidate order. Candidates are token
//! unigrams and bigrams for whitespace-delimited text, characters and
//! character bigrams for text without any whitespace (CJK and similar).
//!
//! Set similarity defaults to the Jaccard index on normalized strings —
//! recall scoring uses exact membership — with an opt-in soft mode that
//! averages per-keyword best cosine similarity.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::embedding::{cosine_sim, Embedding, TextEmbedder};
use crate::error::Result;

/// Ordered set of normalized keywords; order is descending MMR score.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeywordSet {
    keywords: Vec<String>,
}

impl KeywordSet {
    /// Builds a set from pre-extraction strings: normalizes every entry
    /// and drops duplicates, preserving first-occurrence order.
    pub fn from_raw<I: IntoIterator<Item = S>, S: AsRef<str>>(items: I) -> Self {
        let mut seen = BTreeSet::new();
        let mut keywords = Vec::new();
        for item in items {
            let norm = normalize_keyword(item.as_ref());
            if !norm.is_empty() && seen.insert(norm.clone()) {
                keywords.push(norm);
            }
        }
        KeywordSet { keywords }
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    /// Exact membership of an already-normalized keyword.
    pub fn contains(&self, normalized: &str) -> bool {
        self.keywords.iter().any(|k| k == normalized)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.keywords.iter().map(String::as_str)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.keywords
    }
}

/// Lowercase, Unicode NFC, surrounding whitespace stripped.
pub fn normalize_keyword(s: &str) -> String {
    s.trim().to_lowercase().nfc().collect()
}

/// The `[keywords]` section of the unified config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeywordsConfig {
    /// Keywords to keep per chunk.
    pub k: usize,
    /// MMR trade-off λ in [0, 1]; 1 = pure relevance.
    pub mmr_lambda: f64,
    /// Optional path to a custom stopword file (one word per line, `#`
    /// comments). Empty = built-in English + Chinese lists.
    pub stopwords_path: String,
    /// "jaccard" (exact-match, default) or "soft" (embedding cosine).
    pub similarity: String,
}

impl Default for KeywordsConfig {
    fn default() -> Self {
        KeywordsConfig {
            k: 8,
            mmr_lambda: 0.5,
            stopwords_path: String::new(),
            similarity: "jaccard".into(),
        }
    }
}

impl KeywordsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(crate::Error::Config("keywords.k must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mmr_lambda) || !self.mmr_lambda.is_finite() {
            return Err(crate::Error::Config(
                "keywords.mmr_lambda must lie in [0, 1]".into(),
            ));
        }
        if self.similarity != "jaccard" && self.similarity != "soft" {
            return Err(crate::Error::Config(format!(
                "keywords.similarity must be jaccard|soft, got '{}'",
                self.similarity
            )));
        }
        Ok(())
    }
}

/// How [`keyword_set_similarity`] compares two sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMode {
    /// |a∩b| / |a∪b| on normalized strings; 0 when both sets are empty.
    Jaccard,
    /// Mean over keywords of `a` of the best cosine similarity to a
    /// keyword of `b` under the given embedder.
    Soft,
}

/// Configured keyword extractor; pure given an embedder.
pub struct KeywordExtractor {
    k: usize,
    mmr_lambda: f64,
    stopwords: BTreeSet<String>,
}

const STOPWORDS_EN: &str = include_str!("../resources/stopwords_en.txt");
const STOPWORDS_ZH: &str = include_str!("../resources/stopwords_zh.txt");

fn parse_stopwords(raw: &str, into: &mut BTreeSet<String>) {
    for line in raw.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        into.insert(normalize_keyword(line));
    }
}

impl KeywordExtractor {
    /// Extractor with the built-in English + Chinese stopword lists.
    pub fn new(k: usize, mmr_lambda: f64) -> Result<Self> {
        let mut stopwords = BTreeSet::new();
        parse_stopwords(STOPWORDS_EN, &mut stopwords);
        parse_stopwords(STOPWORDS_ZH, &mut stopwords);
        Self::with_stopwords(k, mmr_lambda, stopwords)
    }

    /// Extractor with an explicit stopword set (replaces the built-ins).
    pub fn with_stopwords(k: usize, mmr_lambda: f64, stopwords: BTreeSet<String>) -> Result<Self> {
        if k == 0 {
            return Err(crate::Error::Config("keyword k must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&mmr_lambda) || !mmr_lambda.is_finite() {
            return Err(crate::Error::Config("mmr_lambda must lie in [0, 1]".into()));
        }
        Ok(KeywordExtractor {
            k,
            mmr_lambda,
            stopwords,
        })
    }

    pub fn from_config(cfg: &KeywordsConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.stopwords_path.is_empty() {
            Self::new(cfg.k, cfg.mmr_lambda)
        } else {
            let raw = std::fs::read_to_string(&cfg.stopwords_path)?;
            let mut set = BTreeSet::new();
            parse_stopwords(&raw, &mut set);
            Self::with_stopwords(cfg.k, cfg.mmr_lambda, set)
        }
    }

    /// Same extractor, different k (queries configure k separately).
    pub fn with_k(&self, k: usize) -> Self {
        KeywordExtractor {
            k,
            mmr_lambda: self.mmr_lambda,
            stopwords: self.stopwords.clone(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mmr_lambda(&self) -> f64 {
        self.mmr_lambda
    }

    /// Candidate n-grams of `text`, normalized, deduplicated, stopword-
    /// filtered, in lexicographic order. A candidate is dropped when any
    /// of its constituent units is a stopword.
    pub fn candidates(&self, text: &str) -> Vec<String> {
        let char_mode = !text.chars().any(char::is_whitespace);
        let units: Vec<String> = if char_mode {
            text.chars().map(String::from).collect()
        } else {
            text.split_whitespace().map(str::to_string).collect()
        };
        let joiner = if char_mode { "" } else { " " };
        let mut set = BTreeSet::new();
        for (i, unit) in units.iter().enumerate() {
            let u = normalize_keyword(unit);
            if u.is_empty() || self.stopwords.contains(&u) {
                continue;
            }
            set.insert(u.clone());
            if let Some(next) = units.get(i + 1) {
                let n = normalize_keyword(next);
                // degenerate bigrams (same unit twice) carry no signal
                if n.is_empty() || n == u || self.stopwords.contains(&n) {
                    continue;
                }
                set.insert(format!("{u}{joiner}{n}"));
            }
        }
        set.into_iter().collect()
    }

    /// Extracts up to `k` keywords. Returns fewer (possibly zero) when the
    /// candidate pool is smaller; an empty pool is not an error. A
    /// candidate the provider cannot embed (the hash provider's rare
    /// sign-cancelled zero vectors) is dropped from the pool.
    pub fn extract(&self, text: &str, embedder: &dyn TextEmbedder) -> Result<KeywordSet> {
        if text.is_empty() {
            return Err(crate::Error::Input("cannot extract keywords from empty text".into()));
        }
        let mut candidates = self.candidates(text);
        if candidates.is_empty() {
            return Ok(KeywordSet::default());
        }

        let doc_emb = embedder.embed(text)?;
        let cand_refs: Vec<&str> = candidates.iter().map(String::as_str).collect();
        let cand_embs: Vec<Embedding<f64>> = match embedder.embed_batch(&cand_refs) {
            Ok(v) => v,
            Err(crate::Error::Numeric(_)) => {
                // retry one by one, dropping unembeddable candidates
                let mut kept = Vec::new();
                let mut embs = Vec::new();
                for c in candidates {
                    match embedder.embed(&c) {
                        Ok(e) => {
                            kept.push(c);
                            embs.push(e);
                        }
                        Err(crate::Error::Numeric(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
                candidates = kept;
                embs
            }
            Err(e) => return Err(e),
        };
        if candidates.is_empty() {
            return Ok(KeywordSet::default());
        }
        let relevance: Vec<f64> = cand_embs
            .iter()
            .map(|e| cosine_sim(e, &doc_emb))
            .collect::<Result<_>>()?;

        let picks = mmr_select(
            &candidates,
            &cand_embs,
            &relevance,
            self.k,
            self.mmr_lambda,
        )?;
        Ok(KeywordSet {
            keywords: picks.into_iter().map(|i| candidates[i].clone()).collect(),
        })
    }
}

/// Greedy MMR over a scored candidate pool; returns selected indices in
/// selection order. Candidates must be in lexicographic order so the
/// lowest index wins ties.
fn mmr_select(
    candidates: &[String],
    embeddings: &[Embedding<f64>],
    relevance: &[f64],
    k: usize,
    lambda: f64,
) -> Result<Vec<usize>> {
    let n = candidates.len();
    let mut selected: Vec<usize> = Vec::with_capacity(k.min(n));
    // max cosine similarity of each candidate to the selected set
    let mut max_sim = vec![0.0f64; n];

    while selected.len() < k.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if selected.contains(&i) {
                continue;
            }
            let penalty = if selected.is_empty() { 0.0 } else { max_sim[i] };
            let score = lambda * relevance[i] - (1.0 - lambda) * penalty;
            // strict > keeps the lexicographically first candidate on ties
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let (pick, _) = best.expect("pool not exhausted");
        selected.push(pick);
        for i in 0..n {
            if !selected.contains(&i) {
                let sim = cosine_sim(&embeddings[i], &embeddings[pick])?;
                if sim > max_sim[i] {
                    max_sim[i] = sim;
                }
            }
        }
    }
    Ok(selected)
}

/// Similarity of two keyword sets in [0, 1].
///
/// `embedder` is consulted only in [`SimilarityMode::Soft`].
pub fn keyword_set_similarity(
    a: &KeywordSet,
    b: &KeywordSet,
    mode: SimilarityMode,
    embedder: Option<&dyn TextEmbedder>,
) -> Result<f64> {
    match mode {
        SimilarityMode::Jaccard => {
            if a.is_empty() && b.is_empty() {
                return Ok(0.0);
            }
            let sa: BTreeSet<&str> = a.iter().collect();
            let sb: BTreeSet<&str> = b.iter().collect();
            let inter = sa.intersection(&sb).count();
            let union = sa.union(&sb).count();
            Ok(inter as f64 / union as f64)
        }
        SimilarityMode::Soft => {
            if a.is_empty() || b.is_empty() {
                return Ok(0.0);
            }
            let embedder = embedder.ok_or_else(|| {
                crate::Error::Config("soft keyword similarity requires an embedder".into())
            })?;
            let b_refs: Vec<&str> = b.iter().collect();
            let b_embs = embedder.embed_batch(&b_refs)?;
            let mut total = 0.0;
            for kw in a.iter() {
                let e = embedder.embed(kw)?;
                let mut best = f64::NEG_INFINITY;
                for be in &b_embs {
                    best = best.max(cosine_sim(&e, be)?);
                }
                total += best.max(0.0).min(1.0);
            }
            Ok(total / a.len() as f64)
        }
    }
}

/// Convenience for the default (Jaccard) mode.
pub fn jaccard_similarity(a: &KeywordSet, b: &KeywordSet) -> f64 {
    keyword_set_similarity(a, b, SimilarityMode::Jaccard, None).expect("jaccard is infallible")
}
