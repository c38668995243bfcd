//! Scalar-generic vector kernels.
//!
//! Everything downstream (similarity, softmax, projection, training) is
//! built on these few functions. They are generic over the float type so
//! the same code backs f32 index storage and f64 training math; concrete
//! aliases live at the crate root.

use num_traits::Float;
use std::iter::Sum;

/// Marker trait for scalars usable throughout the crate.
pub trait Scalar: Float + Sum + Send + Sync + 'static {}
impl<T> Scalar for T where T: Float + Sum + Send + Sync + 'static {}

/// Dot product. Callers guarantee equal lengths.
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn l2_norm<F: Scalar>(v: &[F]) -> F {
    dot(v, v).sqrt()
}

/// Scales `v` to unit L2 norm. Returns the original norm, or `None` if the
/// vector has zero (or non-finite) norm and was left untouched.
pub fn normalize_in_place<F: Scalar>(v: &mut [F]) -> Option<F> {
    let norm = l2_norm(v);
    if norm <= F::zero() || !norm.is_finite() {
        return None;
    }
    for x in v.iter_mut() {
        *x = *x / norm;
    }
    Some(norm)
}

/// Numerically stable softmax: max-subtracted exponentials.
pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    debug_assert!(!logits.is_empty());
    let max = logits.iter().cloned().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: F = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// log(sum(exp(logits))), max-subtracted.
pub fn log_sum_exp<F: Scalar>(logits: &[F]) -> F {
    let max = logits.iter().cloned().fold(F::neg_infinity(), F::max);
    let sum: F = logits.iter().map(|&z| (z - max).exp()).sum();
    max + sum.ln()
}

/// D_KL(p ‖ q) = Σ p_i · ln(p_i / q_i). Callers guarantee equal lengths
/// and strictly positive q; zero p entries contribute zero.
pub fn kl_divergence<F: Scalar>(p: &[F], q: &[F]) -> F {
    debug_assert_eq!(p.len(), q.len());
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            if pi > F::zero() {
                pi * (pi / qi).ln()
            } else {
                F::zero()
            }
        })
        .sum()
}

/// Squared Euclidean distance.
pub fn sq_euclidean<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}
