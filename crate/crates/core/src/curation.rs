//! Instruction-data curation: segment, score, self-ask, filter, select.
//!
//! The pipeline turns raw documents into an instruction dataset in five
//! stages:
//!
//! 1. ensemble splitting (plus exact-duplicate removal and optional
//!    seeded sampling of the raw segments);
//! 2. potential-quality assessment with a pluggable scorer (the built-in
//!    heuristic combines a length-in-range term, an alphanumeric-content
//!    ratio, and a non-repetition term);
//! 3. self-asking: a label is sampled uniformly from the taxonomy per
//!    segment and an external text generator turns the labelled segment
//!    into an ⟨instruction, input, output⟩ record (a deterministic stub
//!    generator stands in for pipeline tests and offline runs);
//! 4. multi-dimensional filtering: instruction deduplication (exact and
//!    embedding-similarity), then quality and complexity thresholds;
//! 5. greedy k-center selection over instruction embeddings to keep a
//!    diverse subset.
//!
//! Scoring models and reward models are deliberately behind trait
//! interfaces with deterministic heuristic defaults.

use std::collections::BTreeSet;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chunking::{ensemble_split, ChunkingConfig};
use crate::embedding::{cosine_sim, fnv1a64, Embedding, TextEmbedder};
use crate::error::{Error, Result};
use crate::keywords::normalize_keyword;
use crate::num;
use crate::types::{Chunk, Document};

/// A surviving segment with its potential-quality score.
#[derive(Debug, Clone)]
pub struct CandidateSegment {
    pub segment: Chunk,
    pub quality: f64,
}

/// One ⟨instruction, input, output⟩ record flowing through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub instruction: String,
    /// May be empty (segment-as-answer mode).
    pub input: String,
    pub output: String,
    pub source_chunk_id: String,
    pub label: Label,
    pub quality: f64,
    pub complexity: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub dimension: String,
    #[serde(rename = "type")]
    pub kind: String,
}

/// Label axes for self-asking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTaxonomy {
    pub dimensions: Vec<String>,
    pub types: Vec<String>,
}

impl LabelTaxonomy {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() || self.types.is_empty() {
            return Err(Error::Config(
                "taxonomy dimensions and types must be non-empty".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------
// quality and complexity scorers
// ---------------------------------------------------------------------

/// Pluggable potential-quality scorer (the paper's scoring model slot).
pub trait QualityScorer: Send + Sync {
    /// Score in [0, 1].
    fn score(&self, segment: &Chunk) -> f64;
}

/// Deterministic heuristic: weighted sum of a length-in-range term
/// (1 inside `[min_len, max_len]`, linear falloff outside), the
/// alphanumeric character ratio, and a non-repetition term
/// (1 − duplicate character-trigram ratio). Weights are normalized to
/// sum 1; the result is clamped to [0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeuristicQualityScorer {
    pub min_len: usize,
    pub max_len: usize,
    pub w_length: f64,
    pub w_alnum: f64,
    pub w_repetition: f64,
}

impl Default for HeuristicQualityScorer {
    fn default() -> Self {
        HeuristicQualityScorer {
            min_len: 40,
            max_len: 400,
            w_length: 0.4,
            w_alnum: 0.3,
            w_repetition: 0.3,
        }
    }
}

impl HeuristicQualityScorer {
    fn length_term(&self, len: usize) -> f64 {
        if len < self.min_len {
            len as f64 / self.min_len as f64
        } else if len > self.max_len {
            (1.0 - (len - self.max_len) as f64 / self.max_len as f64).max(0.0)
        } else {
            1.0
        }
    }
}

impl QualityScorer for HeuristicQualityScorer {
    fn score(&self, segment: &Chunk) -> f64 {
        let chars: Vec<char> = segment.text.chars().collect();
        let len = chars.len();
        let length = self.length_term(len);

        let alnum = if len == 0 {
            0.0
        } else {
            chars.iter().filter(|c| c.is_alphanumeric()).count() as f64 / len as f64
        };

        let repetition = if len < 3 {
            1.0
        } else {
            let total = len - 2;
            let unique: BTreeSet<String> =
                chars.windows(3).map(|w| w.iter().collect()).collect();
            1.0 - (total - unique.len()) as f64 / total as f64
        };

        let wsum = self.w_length + self.w_alnum + self.w_repetition;
        if wsum <= 0.0 {
            return 0.0;
        }
        let score =
            (self.w_length * length + self.w_alnum * alnum + self.w_repetition * repetition)
                / wsum;
        score.clamp(0.0, 1.0)
    }
}

/// Scores a segment with the given scorer.
pub fn assess_quality(segment: &Chunk, scorer: &dyn QualityScorer) -> f64 {
    scorer.score(segment).clamp(0.0, 1.0)
}

/// Pluggable complexity scorer (the paper's reward-model slot).
pub trait ComplexityScorer: Send + Sync {
    fn score(&self, record: &InstructionRecord) -> f64;
}

/// Normalized instruction length plus a clause-count proxy, equally
/// weighted and clamped to [0, 1]. Clauses are counted by the
/// punctuation marks `, ; . ! ?` and their CJK equivalents.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeuristicComplexityScorer {
    pub target_len: usize,
    pub target_clauses: usize,
}

impl Default for HeuristicComplexityScorer {
    fn default() -> Self {
        HeuristicComplexityScorer {
            target_len: 120,
            target_clauses: 4,
        }
    }
}

const CLAUSE_MARKS: &[char] = &[',', ';', '.', '!', '?', '，', '；', '。', '！', '？'];

impl ComplexityScorer for HeuristicComplexityScorer {
    fn score(&self, record: &InstructionRecord) -> f64 {
        let len = record.instruction.chars().count();
        let clauses = 1 + record
            .instruction
            .chars()
            .filter(|c| CLAUSE_MARKS.contains(c))
            .count();
        let len_term = (len as f64 / self.target_len.max(1) as f64).min(1.0);
        let clause_term = (clauses as f64 / self.target_clauses.max(1) as f64).min(1.0);
        (0.5 * len_term + 0.5 * clause_term).clamp(0.0, 1.0)
    }
}

// ---------------------------------------------------------------------
// candidate selection
// ---------------------------------------------------------------------

/// How stage 2 keeps segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionRule {
    /// Keep segments with score ≥ threshold.
    Threshold(f64),
    /// Keep the top ⌈n·fraction⌉ segments.
    TopFraction(f64),
}

/// Scores every segment and applies the rule. Deterministic: ties are
/// broken by chunk id.
pub fn select_candidates(
    segments: &[Chunk],
    scorer: &dyn QualityScorer,
    rule: SelectionRule,
) -> Result<Vec<CandidateSegment>> {
    match rule {
        SelectionRule::Threshold(t) if !t.is_finite() => {
            return Err(Error::Config("selection threshold must be finite".into()))
        }
        SelectionRule::TopFraction(f) if !(0.0..=1.0).contains(&f) => {
            return Err(Error::Config(
                "selection top-fraction must lie in [0, 1]".into(),
            ))
        }
        _ => {}
    }
    let mut scored: Vec<CandidateSegment> = segments
        .iter()
        .map(|c| CandidateSegment {
            segment: c.clone(),
            quality: assess_quality(c, scorer),
        })
        .collect();
    scored.sort_by(|a, b| {
        b.quality
            .partial_cmp(&a.quality)
            .expect("finite quality")
            .then_with(|| a.segment.chunk_id.cmp(&b.segment.chunk_id))
    });
    Ok(match rule {
        SelectionRule::Threshold(t) => scored.into_iter().filter(|c| c.quality >= t).collect(),
        SelectionRule::TopFraction(f) => {
            let keep = (segments.len() as f64 * f).ceil() as usize;
            scored.truncate(keep);
            scored
        }
    })
}

// ---------------------------------------------------------------------
// self-asking
// ---------------------------------------------------------------------

/// External text generator contract (`POST /generate {"prompt"}` →
/// `{"text"}`), or the built-in deterministic stub.
pub trait InstructionGenerator: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String>;
}

/// Deterministic template-filling generator for pipeline tests and
/// offline runs.
pub struct StubGenerator;

const PASSAGE_MARKER: &str = "Passage:\n";

impl InstructionGenerator for StubGenerator {
    fn generate(&self, prompt: &str) -> Result<String> {
        let passage = prompt
            .split_once(PASSAGE_MARKER)
            .map(|(_, p)| p)
            .unwrap_or(prompt);
        let head: String = passage.chars().take(72).collect();
        Ok(format!("Explain for practitioners: {}", head.trim()))
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// HTTP client for a remote generator.
pub struct HttpGenerator {
    client: reqwest::blocking::Client,
    endpoint: String,
}

impl HttpGenerator {
    pub fn new(endpoint: &str, timeout_ms: u64) -> Result<Self> {
        if endpoint.is_empty() {
            return Err(Error::Config("generator endpoint is empty".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(timeout_ms))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpGenerator {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
        })
    }
}

impl InstructionGenerator for HttpGenerator {
    fn generate(&self, prompt: &str) -> Result<String> {
        let url = format!("{}/generate", self.endpoint);
        let resp = self
            .client
            .post(&url)
            .json(&GenerateRequest { prompt })
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    Error::Timeout(e.to_string())
                } else {
                    Error::Transport(e.to_string())
                }
            })?;
        if !resp.status().is_success() {
            return Err(Error::Transport(format!(
                "{url} returned HTTP {}",
                resp.status()
            )));
        }
        let body: GenerateResponse = resp
            .json()
            .map_err(|e| Error::MalformedResponse(e.to_string()))?;
        Ok(body.text)
    }
}

/// How the record's output field is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerMode {
    /// The segment text is the answer; input stays empty.
    Segment,
    /// The generator produces the answer from a document-query prompt;
    /// the segment text becomes the input.
    Generate,
}

fn self_ask_prompt(label: &Label, segment_text: &str) -> String {
    format!(
        "You are annotating domain documents. Dimension: {}. Type: {}. \
         Write one instruction whose answer is grounded in the passage.\n\n{PASSAGE_MARKER}{}",
        label.dimension, label.kind, segment_text
    )
}

/// Builds one instruction record from a candidate segment: samples a
/// label uniformly with the seeded RNG (one draw per axis), prompts the
/// generator, and assembles the record. Generator failures propagate;
/// the pipeline skips and counts them.
pub fn self_ask(
    candidate: &CandidateSegment,
    taxonomy: &LabelTaxonomy,
    generator: &dyn InstructionGenerator,
    answer_mode: AnswerMode,
    seed: u64,
) -> Result<InstructionRecord> {
    taxonomy.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = taxonomy.dimensions[rng.gen_range(0..taxonomy.dimensions.len())].clone();
    let kind = taxonomy.types[rng.gen_range(0..taxonomy.types.len())].clone();
    let label = Label {
        dimension: dim,
        kind,
    };

    let prompt = self_ask_prompt(&label, &candidate.segment.text);
    let instruction = generator.generate(&prompt)?.trim().to_string();
    if instruction.is_empty() {
        return Err(Error::MalformedResponse(
            "generator returned an empty instruction".into(),
        ));
    }

    let (input, output) = match answer_mode {
        AnswerMode::Segment => (String::new(), candidate.segment.text.clone()),
        AnswerMode::Generate => {
            let answer_prompt = format!(
                "{instruction}\n\nAnswer using only the passage.\n\n{PASSAGE_MARKER}{}",
                candidate.segment.text
            );
            let answer = generator.generate(&answer_prompt)?.trim().to_string();
            if answer.is_empty() {
                return Err(Error::MalformedResponse(
                    "generator returned an empty answer".into(),
                ));
            }
            (candidate.segment.text.clone(), answer)
        }
    };

    Ok(InstructionRecord {
        instruction,
        input,
        output,
        source_chunk_id: candidate.segment.chunk_id.clone(),
        label,
        quality: candidate.quality,
        complexity: 0.0, // assigned by the filtering stage
    })
}

// ---------------------------------------------------------------------
// deduplication
// ---------------------------------------------------------------------

/// Greedy instruction dedup. Records are ordered by quality descending
/// (ties: source chunk id, then instruction) and kept unless the
/// instruction exactly matches a kept record after normalization or its
/// embedding cosine reaches `threshold` against any kept record.
/// Idempotent and deterministic.
pub fn dedup(
    records: Vec<InstructionRecord>,
    embedder: &dyn TextEmbedder,
    threshold: f64,
) -> Result<Vec<InstructionRecord>> {
    if !(0.0 < threshold && threshold <= 1.0) {
        return Err(Error::Config(format!(
            "dedup threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let mut ordered = records;
    ordered.sort_by(|a, b| {
        b.quality
            .partial_cmp(&a.quality)
            .expect("finite quality")
            .then_with(|| a.source_chunk_id.cmp(&b.source_chunk_id))
            .then_with(|| a.instruction.cmp(&b.instruction))
    });

    let mut kept: Vec<InstructionRecord> = Vec::new();
    let mut kept_norms: Vec<String> = Vec::new();
    let mut kept_embs: Vec<Embedding<f64>> = Vec::new();
    for rec in ordered {
        let norm = normalize_keyword(&rec.instruction);
        if kept_norms.iter().any(|k| k == &norm) {
            continue;
        }
        let emb = embedder.embed(&rec.instruction)?;
        let mut similar = false;
        for ke in &kept_embs {
            if cosine_sim(&emb, ke)? >= threshold {
                similar = true;
                break;
            }
        }
        if similar {
            continue;
        }
        kept_norms.push(norm);
        kept_embs.push(emb);
        kept.push(rec);
    }
    Ok(kept)
}

// ---------------------------------------------------------------------
// k-center selection
// ---------------------------------------------------------------------

/// Greedy k-center (farthest-point, 2-approximation). Seeds with the
/// highest-quality item (ties: lowest index), then repeatedly adds the
/// point with the largest Euclidean distance to the selected set (ties:
/// lowest index). Returns indices in selection order.
pub fn k_center_select(
    items: &[Embedding<f64>],
    k: usize,
    qualities: &[f64],
) -> Result<Vec<usize>> {
    let n = items.len();
    if k == 0 || k > n {
        return Err(Error::Input(format!(
            "k must satisfy 1 ≤ k ≤ {n}, got {k}"
        )));
    }
    if qualities.len() != n {
        return Err(Error::Input(format!(
            "{} qualities for {n} items",
            qualities.len()
        )));
    }

    let mut seed = 0usize;
    for (i, &q) in qualities.iter().enumerate() {
        if q > qualities[seed] {
            seed = i;
        }
    }

    let dist = |a: usize, b: usize| num::sq_euclidean(items[a].values(), items[b].values()).sqrt();

    let mut selected = vec![seed];
    let mut min_dist: Vec<f64> = (0..n).map(|i| dist(i, seed)).collect();
    while selected.len() < k {
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_dist.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        selected.push(best);
        for i in 0..n {
            let d = dist(i, best);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }
    Ok(selected)
}

/// Max over items of the distance to the nearest selected index.
pub fn covering_radius(items: &[Embedding<f64>], selected: &[usize]) -> f64 {
    items
        .iter()
        .map(|p| {
            selected
                .iter()
                .map(|&s| num::sq_euclidean(p.values(), items[s].values()).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------
// the pipeline
// ---------------------------------------------------------------------

/// The `[curation]` section of the unified config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurationConfig {
    pub seed: u64,
    /// "threshold" or "top-fraction".
    pub quality_mode: String,
    pub quality_value: f64,
    pub quality_scorer: HeuristicQualityScorer,
    pub complexity_scorer: HeuristicComplexityScorer,
    pub dimensions: Vec<String>,
    pub types: Vec<String>,
    pub dedup_threshold: f64,
    pub min_quality: f64,
    pub min_complexity: f64,
    /// Records kept by k-center; 0 keeps every survivor.
    pub k_diversity: usize,
    /// "segment" or "generate".
    pub answer_mode: String,
    pub generator_endpoint: String,
    pub timeout_ms: u64,
    /// Seeded sampling of raw segments (stage 1); 1.0 keeps all.
    pub sample_fraction: f64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            seed: 0,
            quality_mode: "threshold".into(),
            quality_value: 0.3,
            quality_scorer: HeuristicQualityScorer::default(),
            complexity_scorer: HeuristicComplexityScorer::default(),
            dimensions: vec![
                "knowledge".into(),
                "application".into(),
                "analysis".into(),
            ],
            types: vec!["question".into(), "task".into()],
            dedup_threshold: 0.9,
            min_quality: 0.0,
            min_complexity: 0.0,
            k_diversity: 0,
            answer_mode: "segment".into(),
            generator_endpoint: String::new(),
            timeout_ms: 10_000,
            sample_fraction: 1.0,
        }
    }
}

impl CurationConfig {
    pub fn taxonomy(&self) -> LabelTaxonomy {
        LabelTaxonomy {
            dimensions: self.dimensions.clone(),
            types: self.types.clone(),
        }
    }

    pub fn selection_rule(&self) -> Result<SelectionRule> {
        match self.quality_mode.as_str() {
            "threshold" => Ok(SelectionRule::Threshold(self.quality_value)),
            "top-fraction" => Ok(SelectionRule::TopFraction(self.quality_value)),
            other => Err(Error::Config(format!(
                "curation.quality_mode must be threshold|top-fraction, got '{other}'"
            ))),
        }
    }

    pub fn answer_mode(&self) -> Result<AnswerMode> {
        match self.answer_mode.as_str() {
            "segment" => Ok(AnswerMode::Segment),
            "generate" => Ok(AnswerMode::Generate),
            other => Err(Error::Config(format!(
                "curation.answer_mode must be segment|generate, got '{other}'"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.taxonomy().validate()?;
        self.selection_rule()?;
        self.answer_mode()?;
        if !(0.0 < self.dedup_threshold && self.dedup_threshold <= 1.0) {
            return Err(Error::Config(
                "curation.dedup_threshold must lie in (0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.sample_fraction) {
            return Err(Error::Config(
                "curation.sample_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Per-stage counts and skip counters, serialized as `report.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub n_split: usize,
    pub n_after_sampling: usize,
    pub n_candidates: usize,
    pub n_generated: usize,
    pub n_after_dedup: usize,
    pub n_after_filters: usize,
    pub n_selected: usize,
    pub skipped_generator_failures: usize,
}

/// Runs the five stages end to end. Deterministic in stub-generator
/// mode. Stage errors propagate with the stage name in the message.
pub fn run_pipeline(
    docs: &[Document],
    chunking: &ChunkingConfig,
    cfg: &CurationConfig,
    generator: &dyn InstructionGenerator,
    embedder: &dyn TextEmbedder,
) -> Result<(Vec<InstructionRecord>, RunReport)> {
    cfg.validate()?;
    chunking.validate()?;
    let taxonomy = cfg.taxonomy();
    let answer_mode = cfg.answer_mode()?;
    let mut report = RunReport::default();

    // stage 1+2: split, drop exact-duplicate spans, sample
    let mut segments: Vec<Chunk> = Vec::new();
    for doc in docs {
        segments.extend(
            ensemble_split(doc, chunking)
                .map_err(|e| Error::Input(format!("split: {e}")))?,
        );
    }
    segments.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
    report.n_split = segments.len();

    let mut seen_texts: BTreeSet<String> = BTreeSet::new();
    segments.retain(|c| seen_texts.insert(normalize_keyword(&c.text)));
    if cfg.sample_fraction < 1.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5a5a_5a5a);
        segments.retain(|_| rng.gen::<f64>() < cfg.sample_fraction);
    }
    report.n_after_sampling = segments.len();

    // stage 3: quality assessment and candidate selection
    let candidates = select_candidates(&segments, &cfg.quality_scorer, cfg.selection_rule()?)
        .map_err(|e| Error::Input(format!("select: {e}")))?;
    report.n_candidates = candidates.len();

    // stage 4: self-ask; per-record seed derived from the chunk id so
    // results do not depend on iteration order
    let mut records = Vec::with_capacity(candidates.len());
    for cand in &candidates {
        let rec_seed = cfg.seed ^ fnv1a64(cand.segment.chunk_id.as_bytes());
        match self_ask(cand, &taxonomy, generator, answer_mode, rec_seed) {
            Ok(r) => records.push(r),
            Err(Error::Transport(_) | Error::Timeout(_) | Error::MalformedResponse(_)) => {
                report.skipped_generator_failures += 1;
            }
            Err(e) => return Err(Error::Input(format!("self-ask: {e}"))),
        }
    }
    report.n_generated = records.len();

    // stage 5a: dedup
    let records = dedup(records, embedder, cfg.dedup_threshold)
        .map_err(|e| Error::Input(format!("dedup: {e}")))?;
    report.n_after_dedup = records.len();

    // stage 5b: quality and complexity filters
    let mut records: Vec<InstructionRecord> = records
        .into_iter()
        .map(|mut r| {
            r.complexity = cfg.complexity_scorer.score(&r).clamp(0.0, 1.0);
            r
        })
        .filter(|r| r.quality >= cfg.min_quality && r.complexity >= cfg.min_complexity)
        .collect();
    report.n_after_filters = records.len();

    // stage 5c: k-center diversity selection over instruction embeddings
    if cfg.k_diversity > 0 && cfg.k_diversity < records.len() {
        let embs: Vec<Embedding<f64>> = records
            .iter()
            .map(|r| embedder.embed(&r.instruction))
            .collect::<Result<_>>()
            .map_err(|e| Error::Input(format!("k-center: {e}")))?;
        let qualities: Vec<f64> = records.iter().map(|r| r.quality).collect();
        let picks = k_center_select(&embs, cfg.k_diversity, &qualities)
            .map_err(|e| Error::Input(format!("k-center: {e}")))?;
        let pick_set: BTreeSet<usize> = picks.into_iter().collect();
        records = records
            .into_iter()
            .enumerate()
            .filter_map(|(i, r)| pick_set.contains(&i).then_some(r))
            .collect();
    }
    records.sort_by(|a, b| {
        a.source_chunk_id
            .cmp(&b.source_chunk_id)
            .then_with(|| a.instruction.cmp(&b.instruction))
    });
    report.n_selected = records.len();
    Ok((records, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbedder;
    use crate::types::make_chunk_id;

    fn chunk(id_suffix: usize, text: &str) -> Chunk {
        Chunk {
            chunk_id: make_chunk_id("d", 64, id_suffix),
            doc_id: "d".into(),
            window_size: 64,
            start: id_suffix,
            end: id_suffix + text.chars().count(),
            text: text.into(),
        }
    }

    mod quality {
        use super::*;

        #[test]
        fn length_term_falls_linearly_below_min() {
            let scorer = HeuristicQualityScorer {
                min_len: 10,
                max_len: 100,
                w_length: 1.0,
                w_alnum: 0.0,
                w_repetition: 0.0,
            };
            // 5 alphanumeric chars, len term = 5/10
            let c = chunk(0, "ab1cd");
            assert!((assess_quality(&c, &scorer) - 0.5).abs() < 1e-12);
        }

        #[test]
        fn saturating_segment_scores_one() {
            let scorer = HeuristicQualityScorer {
                min_len: 5,
                max_len: 100,
                ..HeuristicQualityScorer::default()
            };
            // pure alphanumeric, inside the length band, no repeated trigram
            let c = chunk(0, "abcdefghij");
            assert!((assess_quality(&c, &scorer) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn fixed_segment_matches_hand_arithmetic() {
            let scorer = HeuristicQualityScorer {
                min_len: 10,
                max_len: 20,
                w_length: 0.5,
                w_alnum: 0.25,
                w_repetition: 0.25,
            };
            // "aaaa bbbb" = 9 chars: length 9/10; alnum 8/9;
            // trigrams: aaa,aaa,aa_,a_b,_bb,bbb,bbb -> 7 total, 5 unique
            // repetition = 1 - 2/7
            let c = chunk(0, "aaaa bbbb");
            let expected = 0.5 * (9.0 / 10.0) + 0.25 * (8.0 / 9.0) + 0.25 * (1.0 - 2.0 / 7.0);
            assert!((assess_quality(&c, &scorer) - expected).abs() < 1e-12);
        }
    }

    mod selection {
        use super::*;

        fn segments() -> Vec<Chunk> {
            vec![
                chunk(0, "high quality alphanumeric segment body text"),
                chunk(1, "....,,,,;;;;"),
                chunk(2, "another reasonable planning paragraph here"),
                chunk(3, "zz"),
            ]
        }

        #[test]
        fn threshold_zero_keeps_all() {
            let got = select_candidates(
                &segments(),
                &HeuristicQualityScorer::default(),
                SelectionRule::Threshold(0.0),
            )
            .unwrap();
            assert_eq!(got.len(), 4);
        }

        #[test]
        fn threshold_above_one_keeps_none() {
            let got = select_candidates(
                &segments(),
                &HeuristicQualityScorer::default(),
                SelectionRule::Threshold(1.0 + 1e-9),
            )
            .unwrap();
            assert!(got.is_empty());
        }

        #[test]
        fn top_fraction_half_keeps_two_highest() {
            let scorer = HeuristicQualityScorer::default();
            let got =
                select_candidates(&segments(), &scorer, SelectionRule::TopFraction(0.5)).unwrap();
            assert_eq!(got.len(), 2);
            let mut all: Vec<f64> = segments()
                .iter()
                .map(|c| assess_quality(c, &scorer))
                .collect();
            all.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_eq!(got[0].quality, all[0]);
            assert_eq!(got[1].quality, all[1]);
        }
    }

    mod selfask {
        use super::*;

        fn candidate() -> CandidateSegment {
            CandidateSegment {
                segment: chunk(0, "wetland buffers protect nesting habitat for herons"),
                quality: 0.8,
            }
        }

        #[test]
        fn one_by_one_taxonomy_is_label_deterministic() {
            let tax = LabelTaxonomy {
                dimensions: vec!["knowledge".into()],
                types: vec!["question".into()],
            };
            for seed in [0u64, 7, 99] {
                let rec =
                    self_ask(&candidate(), &tax, &StubGenerator, AnswerMode::Segment, seed)
                        .unwrap();
                assert_eq!(rec.label.dimension, "knowledge");
                assert_eq!(rec.label.kind, "question");
            }
        }

        #[test]
        fn stub_mode_is_bytewise_deterministic() {
            let tax = LabelTaxonomy {
                dimensions: vec!["a".into(), "b".into(), "c".into()],
                types: vec!["x".into(), "y".into()],
            };
            let r1 =
                self_ask(&candidate(), &tax, &StubGenerator, AnswerMode::Segment, 42).unwrap();
            let r2 =
                self_ask(&candidate(), &tax, &StubGenerator, AnswerMode::Segment, 42).unwrap();
            assert_eq!(
                serde_json::to_string(&r1).unwrap(),
                serde_json::to_string(&r2).unwrap()
            );
            assert!(!r1.instruction.is_empty());
            assert_eq!(r1.output, candidate().segment.text);
            assert!(r1.input.is_empty());
        }

        #[test]
        fn labels_are_near_uniform_over_600_seeds() {
            let tax = LabelTaxonomy {
                dimensions: vec!["a".into(), "b".into(), "c".into()],
                types: vec!["x".into(), "y".into()],
            };
            let mut counts: std::collections::BTreeMap<(String, String), usize> =
                Default::default();
            for seed in 0..600u64 {
                let rec =
                    self_ask(&candidate(), &tax, &StubGenerator, AnswerMode::Segment, seed)
                        .unwrap();
                *counts
                    .entry((rec.label.dimension, rec.label.kind))
                    .or_default() += 1;
            }
            assert_eq!(counts.len(), 6);
            for (label, n) in counts {
                let freq = n as f64 / 600.0;
                assert!(
                    (freq - 1.0 / 6.0).abs() <= 0.05,
                    "label {label:?} freq {freq}"
                );
            }
        }
    }

    mod dedup_tests {
        use super::*;

        fn record(id: usize, instruction: &str, quality: f64) -> InstructionRecord {
            InstructionRecord {
                instruction: instruction.into(),
                input: String::new(),
                output: "answer".into(),
                source_chunk_id: make_chunk_id("d", 64, id),
                label: Label {
                    dimension: "k".into(),
                    kind: "q".into(),
                },
                quality,
                complexity: 0.0,
            }
        }

        #[test]
        fn exact_duplicates_keep_higher_quality() {
            let emb = HashEmbedder::new(64).unwrap();
            let recs = vec![
                record(0, "Describe the zoning rules", 0.4),
                record(1, "describe the zoning rules", 0.9),
            ];
            let kept = dedup(recs, &emb, 0.99).unwrap();
            assert_eq!(kept.len(), 1);
            assert_eq!(kept[0].quality, 0.9);
        }

        #[test]
        fn threshold_one_with_distinct_embeddings_drops_nothing_soft() {
            let emb = HashEmbedder::new(64).unwrap();
            let recs = vec![
                record(0, "first instruction about parks", 0.5),
                record(1, "second instruction about rail", 0.6),
                record(2, "third instruction about water", 0.7),
            ];
            let kept = dedup(recs, &emb, 1.0).unwrap();
            assert_eq!(kept.len(), 3);
        }

        #[test]
        fn six_record_fixture_matches_exhaustive_oracle() {
            let emb = HashEmbedder::new(64).unwrap();
            let recs = vec![
                record(0, "explain wetland buffer rules for herons", 0.9),
                record(1, "explain wetland buffer rules for herons today", 0.8),
                record(2, "describe freight corridor upgrades", 0.7),
                record(3, "Explain wetland buffer rules for herons", 0.6),
                record(4, "summarize storm drainage basin design", 0.5),
                record(5, "describe freight corridor upgrade plans", 0.4),
            ];
            let got = dedup(recs.clone(), &emb, 0.9).unwrap();

            // oracle: replay the greedy definition directly
            let mut ordered = recs;
            ordered.sort_by(|a, b| {
                b.quality
                    .partial_cmp(&a.quality)
                    .unwrap()
                    .then(a.source_chunk_id.cmp(&b.source_chunk_id))
                    .then(a.instruction.cmp(&b.instruction))
            });
            let mut kept: Vec<InstructionRecord> = Vec::new();
            'outer: for r in ordered {
                for k in &kept {
                    let exact = normalize_keyword(&r.instruction)
                        == normalize_keyword(&k.instruction);
                    let sim = cosine_sim(
                        &emb.embed(&r.instruction).unwrap(),
                        &emb.embed(&k.instruction).unwrap(),
                    )
                    .unwrap();
                    if exact || sim >= 0.9 {
                        continue 'outer;
                    }
                }
                kept.push(r);
            }
            assert_eq!(got, kept);
            // the exact-duplicate pair (0, 3) must have collapsed
            assert!(got.iter().filter(|r| r.instruction.to_lowercase()
                .starts_with("explain wetland buffer rules for herons")
                && !r.instruction.ends_with("today")).count() <= 1);
        }

        #[test]
        fn dedup_is_idempotent() {
            let emb = HashEmbedder::new(64).unwrap();
            let recs = vec![
                record(0, "explain wetland buffer rules", 0.9),
                record(1, "explain wetland buffer rules fully", 0.8),
                record(2, "describe freight corridors", 0.7),
                record(3, "list storm drainage standards", 0.6),
            ];
            let once = dedup(recs, &emb, 0.85).unwrap();
            let twice = dedup(once.clone(), &emb, 0.85).unwrap();
            assert_eq!(once, twice);
        }
    }

    mod kcenter {
        use super::*;

        fn emb1(x: f64) -> Embedding<f64> {
            Embedding::raw(vec![x]).unwrap()
        }

        #[test]
        fn collinear_fixture_selects_farthest_point() {
            let items: Vec<_> = [0.0, 1.0, 2.0, 3.0].into_iter().map(emb1).collect();
            let got = k_center_select(&items, 2, &[0.5; 4]).unwrap();
            assert_eq!(got, vec![0, 3]);
        }

        #[test]
        fn k_equal_n_returns_all_indices() {
            let items: Vec<_> = [0.0, 1.0, 2.0].into_iter().map(emb1).collect();
            let mut got = k_center_select(&items, 3, &[0.1, 0.9, 0.5]).unwrap();
            got.sort_unstable();
            assert_eq!(got, vec![0, 1, 2]);
        }

        #[test]
        fn seed_is_highest_quality_lowest_index() {
            let items: Vec<_> = [0.0, 5.0, 9.0].into_iter().map(emb1).collect();
            let got = k_center_select(&items, 1, &[0.2, 0.8, 0.8]).unwrap();
            assert_eq!(got, vec![1]);
        }

        #[test]
        fn k_out_of_range_rejected() {
            let items: Vec<_> = [0.0].into_iter().map(emb1).collect();
            assert!(k_center_select(&items, 0, &[0.0]).is_err());
            assert!(k_center_select(&items, 2, &[0.0]).is_err());
        }

        /// All k-subsets of 0..n, lexicographic.
        fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
            let mut out = Vec::new();
            let mut cur: Vec<usize> = Vec::with_capacity(k);
            fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
                if cur.len() == k {
                    out.push(cur.clone());
                    return;
                }
                for i in start..n {
                    cur.push(i);
                    rec(i + 1, n, k, cur, out);
                    cur.pop();
                }
            }
            rec(0, n, k, &mut cur, &mut out);
            out
        }

        #[test]
        fn greedy_radius_within_twice_bruteforce_optimum() {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
            for trial in 0..10 {
                let n = rng.gen_range(5..=10);
                let k = rng.gen_range(2..=4usize.min(n));
                let items: Vec<Embedding<f64>> = (0..n)
                    .map(|_| {
                        Embedding::raw(vec![
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        ])
                        .unwrap()
                    })
                    .collect();
                let qualities = vec![0.5; n];
                let greedy = k_center_select(&items, k, &qualities).unwrap();
                let greedy_r = covering_radius(&items, &greedy);

                let best = combinations(n, k)
                    .iter()
                    .map(|s| covering_radius(&items, s))
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    greedy_r <= 2.0 * best + 1e-12,
                    "trial {trial}: greedy {greedy_r} vs optimum {best}"
                );
            }
        }
    }

    mod pipeline {
        use super::*;

        fn docs() -> Vec<Document> {
            vec![
                Document::new(
                    "plan1",
                    "The riverside district plan reserves wetland buffers, adds three \
                     pocket parks, and converts the old freight spur into a greenway \
                     with native plantings along the floodway.",
                )
                .unwrap(),
                Document::new(
                    "plan2",
                    "Zoning amendments allow mixed retail under housing near transit \
                     stops, with height bonuses granted for affordable units and \
                     ground-floor community space.",
                )
                .unwrap(),
            ]
        }

        fn chunking() -> ChunkingConfig {
            ChunkingConfig::new([80, 160], 16).unwrap()
        }

        #[test]
        fn empty_taxonomy_is_config_error_before_work() {
            let cfg = CurationConfig {
                dimensions: vec![],
                ..CurationConfig::default()
            };
            let emb = HashEmbedder::new(64).unwrap();
            let err = run_pipeline(&docs(), &chunking(), &cfg, &StubGenerator, &emb);
            assert!(matches!(err, Err(Error::Config(_))));
        }

        #[test]
        fn stub_mode_is_deterministic() {
            let cfg = CurationConfig {
                seed: 7,
                ..CurationConfig::default()
            };
            let emb = HashEmbedder::new(64).unwrap();
            let (r1, rep1) =
                run_pipeline(&docs(), &chunking(), &cfg, &StubGenerator, &emb).unwrap();
            let (r2, rep2) =
                run_pipeline(&docs(), &chunking(), &cfg, &StubGenerator, &emb).unwrap();
            assert_eq!(
                serde_json::to_string(&r1).unwrap(),
                serde_json::to_string(&r2).unwrap()
            );
            assert_eq!(rep1, rep2);
        }

        #[test]
        fn stage_counts_are_monotone() {
            let cfg = CurationConfig {
                k_diversity: 2,
                ..CurationConfig::default()
            };
            let emb = HashEmbedder::new(64).unwrap();
            let (records, rep) =
                run_pipeline(&docs(), &chunking(), &cfg, &StubGenerator, &emb).unwrap();
            assert!(rep.n_split >= rep.n_after_sampling);
            assert!(rep.n_after_sampling >= rep.n_candidates);
            assert!(rep.n_candidates >= rep.n_generated);
            assert!(rep.n_generated >= rep.n_after_dedup);
            assert!(rep.n_after_dedup >= rep.n_after_filters);
            assert!(rep.n_after_filters >= rep.n_selected);
            assert_eq!(records.len(), rep.n_selected);
            assert!(rep.n_selected <= 2);
        }

        #[test]
        fn records_reference_real_chunks_and_stay_bounded() {
            let cfg = CurationConfig::default();
            let emb = HashEmbedder::new(64).unwrap();
            let (records, _) =
                run_pipeline(&docs(), &chunking(), &cfg, &StubGenerator, &emb).unwrap();
            assert!(!records.is_empty());

            let mut split_ids = BTreeSet::new();
            for d in docs() {
                for c in ensemble_split(&d, &chunking()).unwrap() {
                    split_ids.insert(c.chunk_id);
                }
            }
            for r in &records {
                assert!(split_ids.contains(&r.source_chunk_id), "{}", r.source_chunk_id);
                assert!((0.0..=1.0).contains(&r.quality));
                assert!((0.0..=1.0).contains(&r.complexity));
                assert!(!r.instruction.is_empty());
                assert!(!r.output.is_empty());
            }
        }

        #[test]
        fn failing_generator_is_counted_not_fatal() {
            struct FailingGenerator;
            impl InstructionGenerator for FailingGenerator {
                fn generate(&self, _prompt: &str) -> Result<String> {
                    Err(Error::Transport("connection refused".into()))
                }
            }
            let cfg = CurationConfig::default();
            let emb = HashEmbedder::new(64).unwrap();
            let (records, rep) =
                run_pipeline(&docs(), &chunking(), &cfg, &FailingGenerator, &emb).unwrap();
            assert!(records.is_empty());
            assert_eq!(rep.skipped_generator_failures, rep.n_candidates);
        }
    }
}
