//! Seeded synthetic benchmarks.
//!
//! Two families:
//!
//! - retrieval suites: documents carry a globally unique three-token
//!   marker (planted twice) inside distractor text drawn from a seeded
//!   pseudo-word vocabulary. Keyword-heavy queries are the exact marker
//!   triple; semantic queries are shuffled distractor excerpts. Ground
//!   truth is text-derived: a chunk is relevant when it contains the
//!   required tokens intact.
//! - an STS-style set for embedding fine-tuning: positives are dropout
//!   perturbations, negatives are cross-pairings, and every text shares
//!   a heavy boilerplate vocabulary so raw hash cosines separate the
//!   two classes poorly — leaving headroom a trained head can claim.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chunking::{ensemble_split, ChunkingConfig};
use crate::error::{Error, Result};
use crate::training::TrainingPair;
use crate::types::Document;

use super::{Judgment, QueryRecord, StsExample};

/// A generated corpus with its queries and ground truth.
#[derive(Debug, Clone)]
pub struct Suite {
    pub docs: Vec<Document>,
    pub queries: Vec<QueryRecord>,
    pub judgments: Vec<Judgment>,
}

const CONSONANTS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=4);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(CONSONANTS[rng.gen_range(0..CONSONANTS.len())]);
        w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
    }
    w
}

fn vocabulary(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    let mut vocab = BTreeSet::new();
    while vocab.len() < size {
        vocab.insert(pseudo_word(rng));
    }
    vocab.into_iter().collect()
}

fn markers(doc_index: usize) -> [String; 3] {
    [
        format!("zq{doc_index}a"),
        format!("zq{doc_index}b"),
        format!("zq{doc_index}c"),
    ]
}

/// Distractor body with the marker triple inserted after positions 0
/// and 30 (the triple appears twice, intact).
fn doc_text(rng: &mut ChaCha8Rng, vocab: &[String], marks: &[String; 3]) -> String {
    let mut tokens: Vec<String> = Vec::with_capacity(66);
    for i in 0..60 {
        tokens.push(vocab[rng.gen_range(0..vocab.len())].clone());
        if i == 0 || i == 30 {
            tokens.extend(marks.iter().cloned());
        }
    }
    tokens.join(" ")
}

/// Chunk ids whose text contains every required token intact.
fn relevant_chunks(
    doc: &Document,
    chunking: &ChunkingConfig,
    required: &[String],
    min_hits: usize,
) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for chunk in ensemble_split(doc, chunking)? {
        let tokens: BTreeSet<&str> = chunk.text.split_whitespace().collect();
        let hits = required.iter().filter(|m| tokens.contains(m.as_str())).count();
        if hits >= min_hits {
            out.insert(chunk.chunk_id);
        }
    }
    Ok(out)
}

/// Queries are the exact marker triples; relevant chunks must contain
/// all three markers.
pub fn keyword_suite(
    n_docs: usize,
    n_queries: usize,
    seed: u64,
    chunking: &ChunkingConfig,
) -> Result<Suite> {
    if n_queries > n_docs {
        return Err(Error::Config(format!(
            "cannot make {n_queries} queries over {n_docs} docs"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary(&mut rng, 240);

    let mut docs = Vec::with_capacity(n_docs);
    let mut queries = Vec::with_capacity(n_queries);
    let mut judgments = Vec::with_capacity(n_queries);
    for i in 0..n_docs {
        let marks = markers(i);
        let doc = Document {
            doc_id: format!("doc{i:04}"),
            title: String::new(),
            text: doc_text(&mut rng, &vocab, &marks),
            metadata: Default::default(),
        };
        if i < n_queries {
            let relevant = relevant_chunks(&doc, chunking, &marks, 3)?;
            if relevant.is_empty() {
                return Err(Error::Evaluation(format!(
                    "no chunk of {} contains the full marker triple; \
                     window sizes too small",
                    doc.doc_id
                )));
            }
            queries.push(QueryRecord {
                query_id: format!("q{i:04}"),
                text: marks.join(" "),
            });
            judgments.push(Judgment {
                query_id: format!("q{i:04}"),
                relevant_chunk_ids: relevant,
            });
        }
        docs.push(doc);
    }
    Ok(Suite {
        docs,
        queries,
        judgments,
    })
}

/// Queries paraphrase distractor content: eight shuffled body tokens of
/// the target document; a chunk is relevant when it contains at least
/// four of them.
pub fn semantic_suite(
    n_docs: usize,
    n_queries: usize,
    seed: u64,
    chunking: &ChunkingConfig,
) -> Result<Suite> {
    let mut suite = keyword_suite(n_docs, n_queries, seed, chunking)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00c0_ffee);
    let mut queries = Vec::with_capacity(n_queries);
    let mut judgments = Vec::with_capacity(n_queries);
    for i in 0..n_queries {
        let doc = &suite.docs[i];
        let body: Vec<String> = doc
            .text
            .split_whitespace()
            .filter(|t| !t.starts_with("zq"))
            .map(str::to_string)
            .collect();
        // sample from the first chunk-sized stretch so relevance exists
        let mut picked: Vec<String> = body[..12.min(body.len())].to_vec();
        picked.shuffle(&mut rng);
        picked.truncate(8);
        let relevant = relevant_chunks(doc, chunking, &picked, 4)?;
        if relevant.is_empty() {
            return Err(Error::Evaluation(format!(
                "no chunk of {} matches its semantic query",
                doc.doc_id
            )));
        }
        queries.push(QueryRecord {
            query_id: format!("q{i:04}"),
            text: picked.join(" "),
        });
        judgments.push(Judgment {
            query_id: format!("q{i:04}"),
            relevant_chunk_ids: relevant,
        });
    }
    suite.queries = queries;
    suite.judgments = judgments;
    Ok(suite)
}

/// The synthetic STS benchmark: train pairs plus held-out labelled pairs.
#[derive(Debug, Clone)]
pub struct StsBenchmark {
    pub train_pairs: Vec<TrainingPair>,
    pub heldout: Vec<StsExample>,
}

/// Builds the contrastive fine-tuning benchmark.
///
/// 150 base texts mix 4 content words (from a 160-word vocabulary) with
/// 10 boilerplate words shared by every text. Train pairs are
/// `(text, dropout(text))`; held-out examples alternate positives
/// (label 1) and cross-pairings (label 0).
pub fn sts_benchmark(n_train: usize, n_heldout: usize, seed: u64) -> StsBenchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let content = vocabulary(&mut rng, 160);
    let boilerplate = vocabulary(&mut rng, 12);

    let n_texts = 150;
    let texts: Vec<String> = (0..n_texts)
        .map(|_| {
            let mut tokens: Vec<String> = Vec::with_capacity(14);
            let mut chosen = BTreeSet::new();
            while chosen.len() < 4 {
                chosen.insert(rng.gen_range(0..content.len()));
            }
            tokens.extend(chosen.iter().map(|&i| content[i].clone()));
            let mut bp: Vec<usize> = (0..boilerplate.len()).collect();
            bp.shuffle(&mut rng);
            tokens.extend(bp[..10].iter().map(|&i| boilerplate[i].clone()));
            tokens.shuffle(&mut rng);
            tokens.join(" ")
        })
        .collect();

    let dropout = |text: &str, rng: &mut ChaCha8Rng| -> String {
        loop {
            let kept: Vec<&str> = text
                .split_whitespace()
                .filter(|_| rng.gen::<f64>() >= 0.3)
                .collect();
            if !kept.is_empty() {
                return kept.join(" ");
            }
        }
    };

    let train_pairs: Vec<TrainingPair> = (0..n_train)
        .map(|_| {
            let t = &texts[rng.gen_range(0..n_texts)];
            TrainingPair {
                query_text: t.clone(),
                positive_text: dropout(t, &mut rng),
                hard_negatives: Vec::new(),
            }
        })
        .collect();

    let heldout: Vec<StsExample> = (0..n_heldout)
        .map(|i| {
            let a_idx = rng.gen_range(0..n_texts);
            if i % 2 == 0 {
                StsExample {
                    a: texts[a_idx].clone(),
                    b: dropout(&texts[a_idx], &mut rng),
                    label: 1.0,
                }
            } else {
                let mut b_idx = rng.gen_range(0..n_texts);
                while b_idx == a_idx {
                    b_idx = rng.gen_range(0..n_texts);
                }
                StsExample {
                    a: texts[a_idx].clone(),
                    b: texts[b_idx].clone(),
                    label: 0.0,
                }
            }
        })
        .collect();

    StsBenchmark {
        train_pairs,
        heldout,
    }
}
