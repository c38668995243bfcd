//! Retrieval and embedding evaluation.
//!
//! `score@k` is the hit rate: the fraction of judged queries with at
//! least one relevant chunk in the top k results. (Reports label it
//! "score@k (hit-rate)" — answer accuracy through an LLM is out of
//! scope, so the hit rate is the measurable proxy.) `spearman` is the
//! Pearson correlation of average ranks with ties given the mean of
//! their rank positions. The ablation runner compares three variants —
//! plain semantic search, semantic search under a projection head, and
//! full hierarchical search — on the same corpus and judgments.

pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embedding::{ProjectedEmbedder, ProjectionHead, TextEmbedder};
use crate::error::{Error, Result};
use crate::index::Index;
use crate::search::{hierarchical_search, SearchConfig};

/// Relevance ground truth for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub query_id: String,
    #[serde(rename = "relevant")]
    pub relevant_chunk_ids: BTreeSet<String>,
}

/// One benchmark query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
}

/// Fraction of judged queries whose top-k results contain at least one
/// relevant chunk. Every judged query must have a result list.
pub fn score_at_k(
    results: &BTreeMap<String, Vec<String>>,
    judgments: &[Judgment],
    k: usize,
) -> Result<f64> {
    if judgments.is_empty() {
        return Err(Error::Evaluation("no judgments".into()));
    }
    let missing: Vec<&str> = judgments
        .iter()
        .filter(|j| !results.contains_key(&j.query_id))
        .map(|j| j.query_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Evaluation(format!(
            "missing result lists for queries: {}",
            missing.join(", ")
        )));
    }
    let hits = judgments
        .iter()
        .filter(|j| {
            results[&j.query_id]
                .iter()
                .take(k)
                .any(|id| j.relevant_chunk_ids.contains(id))
        })
        .count();
    Ok(hits as f64 / judgments.len() as f64)
}

/// Average ranks, 1-based; ties receive the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share the same value
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation. Errors on fewer than two points or on a
/// constant argument. Returns exactly 1.0 when the rank vectors match.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Evaluation(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Evaluation("need at least 2 points".into()));
    }
    if xs.iter().any(|v| !v.is_finite()) || ys.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("non-finite values".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(Error::Evaluation(
            "spearman is undefined for constant inputs".into(),
        ));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    if rx == ry {
        return Ok(1.0);
    }
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    Ok((cov / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}

/// The ablation's three system variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Plain cosine search with the base embedder.
    SemanticOnly,
    /// Cosine search with the projection head applied.
    SemanticWithHead,
    /// Dual recall + overlap + rerank, head applied.
    FullHierarchical,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::SemanticOnly => "semantic-only",
            Variant::SemanticWithHead => "semantic+head",
            Variant::FullHierarchical => "full-hierarchical",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "semantic-only" => Ok(Variant::SemanticOnly),
            "semantic+head" => Ok(Variant::SemanticWithHead),
            "full-hierarchical" => Ok(Variant::FullHierarchical),
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (semantic-only|semantic+head|full-hierarchical)"
            ))),
        }
    }

    pub const ALL: [Variant; 3] = [
        Variant::SemanticOnly,
        Variant::SemanticWithHead,
        Variant::FullHierarchical,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub score_at_1: f64,
    pub score_at_5: f64,
    pub avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// Always "score@k (hit-rate)" — see the module docs.
    pub metric: String,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    /// Fixed-width table, identical bytes for identical reports.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<20} {:>8} {:>8} {:>8}", "method", "score@1", "score@5", "AVG").unwrap();
        for row in &self.rows {
            writeln!(
                out,
                "{:<20} {:>8.3} {:>8.3} {:>8.3}",
                row.variant, row.score_at_1, row.score_at_5, row.avg
            )
            .unwrap();
        }
        writeln!(out, "metric: {}", self.metric).unwrap();
        out
    }
}

/// Runs every variant against the same index and judgments.
///
/// `index` must be built with `base`; the head (identity when absent)
/// is applied by re-projecting the stored vectors, so the head variants
/// share chunking and keyword sets with the base index.
pub fn run_ablation(
    index: &Index,
    base: Arc<dyn TextEmbedder>,
    head: Option<&ProjectionHead>,
    queries: &[QueryRecord],
    judgments: &[Judgment],
    search_cfg: &SearchConfig,
    variants: &[Variant],
) -> Result<AblationReport> {
    index.check_fingerprint(&*base)?;
    search_cfg.validate()?;
    if variants.is_empty() {
        return Err(Error::Config("no ablation variants requested".into()));
    }

    let by_id: BTreeMap<&str, &str> = queries
        .iter()
        .map(|q| (q.query_id.as_str(), q.text.as_str()))
        .collect();
    let missing: Vec<&str> = judgments
        .iter()
        .filter(|j| !by_id.contains_key(j.query_id.as_str()))
        .map(|j| j.query_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Evaluation(format!(
            "judged queries without text: {}",
            missing.join(", ")
        )));
    }

    let head = head
        .cloned()
        .unwrap_or_else(|| ProjectionHead::identity(index.dims()));
    let projected_index = index.project_through(&head)?;
    let projected = ProjectedEmbedder::new(base.clone(), head)?;

    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mut results: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for j in judgments {
            let text = by_id[j.query_id.as_str()];
            let ranked: Vec<String> = match variant {
                Variant::SemanticOnly => {
                    let q = base.embed(text)?;
                    index
                        .top_k_semantic(&q, 5)?
                        .into_iter()
                        .map(|(id, _)| id)
                        .collect()
                }
                Variant::SemanticWithHead => {
                    let q = projected.embed(text)?;
                    projected_index
                        .top_k_semantic(&q, 5)?
                        .into_iter()
                        .map(|(id, _)| id)
                        .collect()
                }
                Variant::FullHierarchical => {
                    hierarchical_search(text, &projected_index, search_cfg, &projected)?
                        .results
                        .into_iter()
                        .map(|r| r.chunk.chunk_id)
                        .collect()
                }
            };
            results.insert(j.query_id.clone(), ranked);
        }
        let s1 = score_at_k(&results, judgments, 1)?;
        let s5 = score_at_k(&results, judgments, 5)?;
        rows.push(AblationRow {
            variant: variant.label().to_string(),
            score_at_1: s1,
            score_at_5: s5,
            avg: (s1 + s5) / 2.0,
        });
    }
    Ok(AblationReport {
        metric: "score@k (hit-rate)".into(),
        rows,
    })
}

/// STS-style labelled pair, one JSONL line: `{"a","b","label"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsExample {
    pub a: String,
    pub b: String,
    pub label: f64,
}

/// Spearman correlation of embedding cosines against labels.
pub fn sts_spearman(examples: &[StsExample], embedder: &dyn TextEmbedder) -> Result<f64> {
    if examples.len() < 2 {
        return Err(Error::Evaluation("need at least 2 STS examples".into()));
    }
    let mut sims = Vec::with_capacity(examples.len());
    let mut labels = Vec::with_capacity(examples.len());
    for ex in examples {
        let ea = embedder.embed(&ex.a)?;
        let eb = embedder.embed(&ex.b)?;
        sims.push(crate::embedding::cosine_sim(&ea, &eb)?);
        labels.push(ex.label);
    }
    spearman(&sims, &labels)
}

pub fn load_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    load_jsonl(path)
}

pub fn load_judgments(path: &Path) -> Result<Vec<Judgment>> {
    load_jsonl(path)
}

pub fn load_sts(path: &Path) -> Result<Vec<StsExample>> {
    load_jsonl(path)
}

fn load_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let raw = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| {
            Error::Input(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?);
    }
    Ok(out)
}
