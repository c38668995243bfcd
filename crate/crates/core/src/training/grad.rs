//! Batch loss and its analytic gradient.
//!
//! For a pair with query `q` and candidates `c_0..c_{M-1}` (positive at
//! index 0), every text is projected by the trainable head
//! (`u = normalize(W·e + b)`), logits are `z_i = (u_q · u_{c_i})/τ`, and
//!
//! ```text
//! ∂loss/∂z_j = (Q_j − δ_{j,pos}) + λ(Q_j − P_j)
//! ```
//!
//! which backpropagates through the dot products, the normalization
//! (`grad_p = (g − u(u·g))/‖p‖`), and the affine map (outer products
//! against the frozen base embedding). Candidates of a pair are its
//! positive, its hard negatives, and the positives of the other pairs in
//! the batch. The batch gradient is the gradient of the mean pair loss.

use std::collections::HashMap;

use crate::embedding::{ProjectionHead, TextEmbedder};
use crate::error::{Error, Result};
use crate::num;

use super::{TrainConfig, TrainingPair};

/// Gradient with the same shape as the head (`bias` present only when
/// the head has one).
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub w: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl HeadGradient {
    fn zeros(head: &ProjectionHead) -> Self {
        HeadGradient {
            w: vec![0.0; head.w.len()],
            bias: head.bias.as_ref().map(|b| vec![0.0; b.len()]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
            && self.bias.iter().flatten().all(|v| v.is_finite())
    }
}

/// Unique batch texts with cached base embeddings and frozen-head units.
pub(crate) struct TextBank {
    base: Vec<Vec<f64>>,
    frozen_units: Vec<Vec<f64>>,
}

/// A pair resolved to bank indices.
pub(crate) struct PairIdx {
    query: usize,
    positive: usize,
    negatives: Vec<usize>,
}

fn intern(
    texts: &mut Vec<String>,
    index: &mut HashMap<String, usize>,
    t: &str,
) -> usize {
    if let Some(&i) = index.get(t) {
        return i;
    }
    let i = texts.len();
    texts.push(t.to_string());
    index.insert(t.to_string(), i);
    i
}

impl TextBank {
    pub(crate) fn build(
        pairs: &[TrainingPair],
        base: &dyn TextEmbedder,
        frozen: &ProjectionHead,
    ) -> Result<(TextBank, Vec<PairIdx>)> {
        let mut texts = Vec::new();
        let mut index = HashMap::new();
        let idx: Vec<PairIdx> = pairs
            .iter()
            .map(|p| PairIdx {
                query: intern(&mut texts, &mut index, &p.query_text),
                positive: intern(&mut texts, &mut index, &p.positive_text),
                negatives: p
                    .hard_negatives
                    .iter()
                    .map(|n| intern(&mut texts, &mut index, n))
                    .collect(),
            })
            .collect();

        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let embs = base.embed_batch(&refs)?;
        let base_vecs: Vec<Vec<f64>> = embs.into_iter().map(|e| e.into_values()).collect();

        let mut frozen_units = Vec::with_capacity(base_vecs.len());
        for (t, e) in base_vecs.iter().enumerate() {
            let mut y = frozen.affine(e);
            num::normalize_in_place(&mut y).ok_or_else(|| {
                Error::Numeric(format!(
                    "frozen head maps text {:?} to a zero vector",
                    texts[t]
                ))
            })?;
            frozen_units.push(y);
        }
        Ok((
            TextBank {
                base: base_vecs,
                frozen_units,
            },
            idx,
        ))
    }
}

/// Per-text trainable projections for one optimizer step.
struct ProjState {
    units: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

fn project_all(bank: &TextBank, head: &ProjectionHead) -> Result<ProjState> {
    let mut units = Vec::with_capacity(bank.base.len());
    let mut norms = Vec::with_capacity(bank.base.len());
    for e in &bank.base {
        let mut y = head.affine(e);
        let norm = num::normalize_in_place(&mut y)
            .ok_or_else(|| Error::Numeric("head maps a text to a zero vector".into()))?;
        units.push(y);
        norms.push(norm);
    }
    Ok(ProjState { units, norms })
}

/// Candidate bank indices for batch position `j`: positive first, then
/// hard negatives, then the other pairs' positives in batch order.
fn candidate_indices(batch: &[&PairIdx], j: usize) -> Vec<usize> {
    let mut c = Vec::with_capacity(batch.len() + batch[j].negatives.len());
    c.push(batch[j].positive);
    c.extend_from_slice(&batch[j].negatives);
    for (k, p) in batch.iter().enumerate() {
        if k != j {
            c.push(p.positive);
        }
    }
    c
}

/// Mean loss over the batch and, when `want_grad`, its gradient.
pub(crate) fn eval_batch(
    bank: &TextBank,
    batch: &[&PairIdx],
    head: &ProjectionHead,
    cfg: &TrainConfig,
    want_grad: bool,
) -> Result<(f64, Option<HeadGradient>)> {
    let tau = cfg.tau;
    let lambda = cfg.lambda;
    let proj = project_all(bank, head)?;

    let mut loss_sum = 0.0;
    // accumulated ∂loss/∂unit per bank text; normalize/affine backward
    // is linear, so one backward pass per text suffices
    let mut grad_units: Vec<Vec<f64>> = if want_grad {
        bank.base.iter().map(|_| vec![0.0; head.d_out]).collect()
    } else {
        Vec::new()
    };

    for (j, pair) in batch.iter().enumerate() {
        let cands = candidate_indices(batch, j);
        let u = &proj.units[pair.query];

        let z: Vec<f64> = cands
            .iter()
            .map(|&c| num::dot(u, &proj.units[c]) / tau)
            .collect();
        let lse = num::log_sum_exp(&z);
        let q: Vec<f64> = z.iter().map(|zi| (zi - lse).exp()).collect();

        // P under the frozen head, same candidates, same order, same τ
        let uf = &bank.frozen_units[pair.query];
        let zf: Vec<f64> = cands
            .iter()
            .map(|&c| num::dot(uf, &bank.frozen_units[c]) / tau)
            .collect();
        let p = num::softmax(&zf);

        let kl: f64 = p
            .iter()
            .zip(&z)
            .map(|(&pi, &zi)| pi * (pi.ln() - (zi - lse)))
            .sum();
        let pair_loss = (lse - z[0]) + lambda * kl;
        if !pair_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss for batch pair {j}"
            )));
        }
        loss_sum += pair_loss;

        if want_grad {
            for (i, &c) in cands.iter().enumerate() {
                let g_i = (q[i] - if i == 0 { 1.0 } else { 0.0 }) + lambda * (q[i] - p[i]);
                if !g_i.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient for batch pair {j}"
                    )));
                }
                let v = &proj.units[c];
                // ∂loss/∂u += g_i · v / τ ; ∂loss/∂v += g_i · u / τ
                let gq = &mut grad_units[pair.query];
                for (gu, &vi) in gq.iter_mut().zip(v) {
                    *gu += g_i * vi / tau;
                }
                let gc = &mut grad_units[c];
                for (gv, &ui) in gc.iter_mut().zip(u) {
                    *gv += g_i * ui / tau;
                }
            }
        }
    }

    let b = batch.len() as f64;
    let loss = loss_sum / b;
    if !want_grad {
        return Ok((loss, None));
    }

    let mut grad = HeadGradient::zeros(head);
    for (t, g_unit) in grad_units.iter().enumerate() {
        if g_unit.iter().all(|&g| g == 0.0) {
            continue;
        }
        let u = &proj.units[t];
        let norm = proj.norms[t];
        let u_dot_g = num::dot(u, g_unit);
        // through the normalization: grad_p = (g − u(u·g)) / ‖p‖
        let e = &bank.base[t];
        for r in 0..head.d_out {
            let gp = (g_unit[r] - u[r] * u_dot_g) / norm / b;
            let row = &mut grad.w[r * head.d_in..(r + 1) * head.d_in];
            for (w, &ei) in row.iter_mut().zip(e) {
                *w += gp * ei;
            }
            if let Some(gb) = grad.bias.as_mut() {
                gb[r] += gp;
            }
        }
    }
    if !grad.is_finite() {
        return Err(Error::Numeric("non-finite batch gradient".into()));
    }
    Ok((loss, Some(grad)))
}

/// Mean InfoNCE+KL loss of `batch` under `head` (negatives per pair are
/// the explicit hard negatives plus the other pairs' positives).
pub fn batch_loss(
    batch: &[TrainingPair],
    head: &ProjectionHead,
    base: &dyn TextEmbedder,
    frozen: &ProjectionHead,
    cfg: &TrainConfig,
) -> Result<f64> {
    check_shapes(batch, head, base, frozen)?;
    let (bank, idx) = TextBank::build(batch, base, frozen)?;
    let refs: Vec<&PairIdx> = idx.iter().collect();
    let (loss, _) = eval_batch(&bank, &refs, head, cfg, false)?;
    Ok(loss)
}

/// Analytic gradient of [`batch_loss`] with respect to `head.w` (and
/// `head.bias` when present).
pub fn loss_gradient(
    batch: &[TrainingPair],
    head: &ProjectionHead,
    base: &dyn TextEmbedder,
    frozen: &ProjectionHead,
    cfg: &TrainConfig,
) -> Result<HeadGradient> {
    check_shapes(batch, head, base, frozen)?;
    let (bank, idx) = TextBank::build(batch, base, frozen)?;
    let refs: Vec<&PairIdx> = idx.iter().collect();
    let (_, grad) = eval_batch(&bank, &refs, head, cfg, true)?;
    Ok(grad.expect("gradient requested"))
}

fn check_shapes(
    batch: &[TrainingPair],
    head: &ProjectionHead,
    base: &dyn TextEmbedder,
    frozen: &ProjectionHead,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Input("batch is empty".into()));
    }
    for p in batch {
        p.validate()?;
    }
    head.validate()?;
    frozen.validate()?;
    if head.d_in != base.dims() || frozen.d_in != base.dims() {
        return Err(Error::Input(format!(
            "head d_in {} / frozen d_in {} must equal base dims {}",
            head.d_in,
            frozen.d_in,
            base.dims()
        )));
    }
    Ok(())
}
