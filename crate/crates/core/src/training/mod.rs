//! Projection-head fine-tuning.
//!
//! The trainable object is a linear head on top of a frozen base
//! embedder. The loss is InfoNCE over a candidate list (positive at
//! index 0) with a KL regularizer anchoring the trainable distribution
//! `Q` to the frozen pre-trained distribution `P`:
//!
//! ```text
//! loss = −log Q[pos] + λ · D_KL(P ‖ Q),   Q = softmax(cos(h_q, h_i)/τ)
//! ```
//!
//! `P` is computed with the same candidate set, ordering, and τ under
//! the frozen head; it is constant, so it is evaluated once per batch.
//! Gradients are analytic (through cosine, normalization, and the affine
//! map) and validated against central finite differences in the tests.
//! All math is f64.

mod grad;
mod optim;
mod pairs;

pub use grad::{batch_loss, loss_gradient, HeadGradient};
pub use optim::{train, TrainReport};
pub use pairs::{generate_positive_pairs, PairGenReport, PerturbStrategy};

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_sim, Embedding};
use crate::error::{Error, Result};
use crate::num;

/// A contrastive training example. The positive may equal the query
/// (identity perturbation); hard negatives may be empty — in-batch
/// positives of other pairs are added as negatives during training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub query_text: String,
    pub positive_text: String,
    #[serde(default)]
    pub hard_negatives: Vec<String>,
}

impl TrainingPair {
    pub fn validate(&self) -> Result<()> {
        if self.query_text.is_empty()
            || self.positive_text.is_empty()
            || self.hard_negatives.iter().any(String::is_empty)
        {
            return Err(Error::Input("training pair contains an empty text".into()));
        }
        Ok(())
    }
}

/// Which update rule the training loop applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain SGD: exactly reproducible, hand-checkable. The default.
    Sgd,
    /// Adam with β1=0.9, β2=0.999, ε=1e−8.
    Adam,
}

/// The `[training]` section of the unified config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Softmax temperature τ > 0.
    pub tau: f64,
    /// KL regularization weight λ ≥ 0.
    pub lambda: f64,
    /// Step size; 0 is allowed and leaves the head untouched.
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.05,
            lambda: 0.1,
            learning_rate: 1e-2,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config("training.tau must be > 0".into()));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::Config("training.lambda must be ≥ 0".into()));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config("training.learning_rate must be ≥ 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("training.epochs must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("training.batch_size must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// A softmax output: strictly positive probabilities summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDistribution {
    probabilities: Vec<f64>,
}

impl CandidateDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::Input("distribution must be non-empty".into()));
        }
        if probabilities.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::Input(
                "distribution entries must be strictly positive".into(),
            ));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!(
                "distribution sums to {sum}, expected 1 ± 1e-9"
            )));
        }
        Ok(CandidateDistribution { probabilities })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Total variation distance: ½ Σ |p_i − q_i|.
    pub fn total_variation(&self, other: &CandidateDistribution) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::Input("distribution length mismatch".into()));
        }
        Ok(self
            .probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
            / 2.0)
    }
}

/// Cosine logits at temperature τ.
fn logits(h_q: &Embedding<f64>, candidates: &[Embedding<f64>], tau: f64) -> Result<Vec<f64>> {
    candidates
        .iter()
        .map(|c| Ok(cosine_sim(h_q, c)? / tau))
        .collect()
}

/// The regularized InfoNCE loss for one query against a candidate list.
///
/// `p` is the frozen-head distribution over the same candidates in the
/// same order. Always ≥ 0: the log-softmax term is non-negative and so
/// is the KL term.
pub fn infonce_kl_loss(
    h_q: &Embedding<f64>,
    candidates: &[Embedding<f64>],
    positive_index: usize,
    p: &CandidateDistribution,
    tau: f64,
    lambda: f64,
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Input("candidate list is empty".into()));
    }
    if positive_index >= candidates.len() {
        return Err(Error::Input(format!(
            "positive index {positive_index} out of range (n={})",
            candidates.len()
        )));
    }
    if p.len() != candidates.len() {
        return Err(Error::Input(format!(
            "distribution length {} != candidate count {}",
            p.len(),
            candidates.len()
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::Input("tau must be > 0".into()));
    }
    if lambda < 0.0 {
        return Err(Error::Input("lambda must be ≥ 0".into()));
    }

    let z = logits(h_q, candidates, tau)?;
    let lse = num::log_sum_exp(&z);
    let nce = lse - z[positive_index];
    let kl: f64 = p
        .probabilities()
        .iter()
        .zip(&z)
        .map(|(&pi, &zi)| pi * (pi.ln() - (zi - lse)))
        .sum();
    let loss = nce + lambda * kl;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is non-finite ({loss})")));
    }
    Ok(loss)
}

/// Softmax of cosine similarities under the frozen head's embeddings.
pub fn frozen_distribution(
    h_q_frozen: &Embedding<f64>,
    candidates_frozen: &[Embedding<f64>],
    tau: f64,
) -> Result<CandidateDistribution> {
    if candidates_frozen.is_empty() {
        return Err(Error::Input("candidate list is empty".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Input("tau must be > 0".into()));
    }
    let z = logits(h_q_frozen, candidates_frozen, tau)?;
    CandidateDistribution::new(num::softmax(&z))
}

#[cfg(test)]
pub(crate) mod test_support {
    use std::collections::BTreeMap;

    use crate::embedding::{Embedding, TextEmbedder};
    use crate::error::{Error, Result};

    /// Test-only provider mapping fixed texts to fixed vectors.
    pub struct FixedEmbedder {
        dims: usize,
        map: BTreeMap<String, Vec<f64>>,
    }

    impl FixedEmbedder {
        pub fn new(dims: usize, entries: &[(&str, &[f64])]) -> Self {
            let map = entries
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_vec()))
                .collect();
            FixedEmbedder { dims, map }
        }
    }

    impl TextEmbedder for FixedEmbedder {
        fn dims(&self) -> usize {
            self.dims
        }
        fn embed(&self, text: &str) -> Result<Embedding<f64>> {
            let v = self
                .map
                .get(text)
                .ok_or_else(|| Error::Input(format!("no fixture for {text:?}")))?;
            Embedding::unit(v.clone())
        }
        fn fingerprint(&self) -> String {
            format!("fixed:d{}", self.dims)
        }
    }
}
