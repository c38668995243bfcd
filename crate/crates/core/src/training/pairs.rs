//! Positive-pair generation by seeded text perturbation.
//!
//! Texts are split into units the same way the keyword extractor splits
//! them: whitespace tokens when the text contains whitespace, individual
//! characters otherwise. The RNG (ChaCha8 seeded with `seed`) is
//! consumed in a pinned order — texts in input order, one draw per unit
//! (dropout) or per adjacent position (swap) — so any mask can be
//! reproduced by replaying the sequence. A text the perturbation leaves
//! untouched passes through verbatim; otherwise units are re-joined with
//! a single separator.
//!
//! Explanation/rewrite-style positives come from an external generator
//! (see the curation module's generator contract) and are out of band
//! here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::TrainingPair;

/// Built-in perturbation strategies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbStrategy {
    /// Drop each unit independently with probability `p`.
    TokenDropout { p: f64 },
    /// Walk adjacent positions left to right, swapping with probability `p`.
    AdjacentSwap { p: f64 },
}

impl PerturbStrategy {
    fn p(&self) -> f64 {
        match *self {
            PerturbStrategy::TokenDropout { p } | PerturbStrategy::AdjacentSwap { p } => p,
        }
    }
}

/// Pairs plus the count of texts skipped because perturbation emptied them.
#[derive(Debug, Clone)]
pub struct PairGenReport {
    pub pairs: Vec<TrainingPair>,
    pub skipped: usize,
}

fn split_units(text: &str) -> (Vec<String>, &'static str) {
    if text.chars().any(char::is_whitespace) {
        (text.split_whitespace().map(str::to_string).collect(), " ")
    } else {
        (text.chars().map(String::from).collect(), "")
    }
}

/// Builds `(query, positive)` pairs by perturbing each text. Hard
/// negatives are left empty; training adds in-batch negatives.
pub fn generate_positive_pairs(
    texts: &[String],
    strategy: PerturbStrategy,
    seed: u64,
) -> Result<PairGenReport> {
    if texts.is_empty() {
        return Err(Error::Input("no texts to perturb".into()));
    }
    let p = strategy.p();
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::Config(format!(
            "perturbation probability must lie in [0, 1], got {p}"
        )));
    }
    if texts.iter().any(String::is_empty) {
        return Err(Error::Input("texts must be non-empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(texts.len());
    let mut skipped = 0usize;

    for text in texts {
        let (units, joiner) = split_units(text);
        let (kept, changed): (Vec<String>, bool) = match strategy {
            PerturbStrategy::TokenDropout { p } => {
                let mask: Vec<bool> = units.iter().map(|_| rng.gen::<f64>() >= p).collect();
                let changed = mask.iter().any(|&keep| !keep);
                (
                    units
                        .into_iter()
                        .zip(&mask)
                        .filter_map(|(u, &keep)| keep.then_some(u))
                        .collect(),
                    changed,
                )
            }
            PerturbStrategy::AdjacentSwap { p } => {
                let mut units = units;
                let mut changed = false;
                for i in 0..units.len().saturating_sub(1) {
                    if rng.gen::<f64>() < p {
                        units.swap(i, i + 1);
                        changed = true;
                    }
                }
                (units, changed)
            }
        };

        if kept.is_empty() {
            skipped += 1;
            continue;
        }
        let positive = if changed {
            kept.join(joiner)
        } else {
            text.clone()
        };
        pairs.push(TrainingPair {
            query_text: text.clone(),
            positive_text: positive,
            hard_negatives: Vec::new(),
        });
    }
    Ok(PairGenReport { pairs, skipped })
}
