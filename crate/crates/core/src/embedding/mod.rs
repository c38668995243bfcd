//! Embedding providers and the linear projection head.
//!
//! The base encoder is abstracted behind [`TextEmbedder`]. Three providers
//! ship with the crate:
//!
//! - [`HashEmbedder`]: deterministic signed feature hashing (token
//!   unigrams + character trigrams, 64-bit FNV-1a). No model weights, no
//!   network; every downstream value is derivable by hand.
//! - [`RemoteEmbedder`]: HTTP client for an embedding service
//!   (`POST /embed {"texts": [...]}` → `{"embeddings": [[...]], "dims": N}`).
//! - [`ProjectedEmbedder`]: any base provider composed with a trained
//!   [`ProjectionHead`] — the fine-tuned encoder realized as frozen base
//!   plus trainable linear map.
//!
//! All providers return L2-normalized vectors.

mod hash;
mod projected;
mod remote;

pub use hash::{fnv1a64, HashEmbedder};
pub use projected::ProjectedEmbedder;
pub use remote::{RemoteEmbedder, RemoteOptions};

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{self, Scalar};

/// A fixed-dimension real vector, optionally L2-normalized.
///
/// Generic over the scalar type: f64 for provider output and training
/// math, f32 for index storage (see the aliases at the crate root).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<F = f64> {
    values: Vec<F>,
    normalized: bool,
}

impl<F: Scalar> Embedding<F> {
    /// Wraps a raw (not necessarily normalized) vector.
    pub fn raw(values: Vec<F>) -> Result<Self> {
        Self::check(&values)?;
        Ok(Embedding {
            values,
            normalized: false,
        })
    }

    /// Normalizes `values` to unit L2 norm. Zero vectors are forbidden.
    pub fn unit(mut values: Vec<F>) -> Result<Self> {
        Self::check(&values)?;
        num::normalize_in_place(&mut values)
            .ok_or_else(|| Error::Numeric("cannot normalize a zero vector".into()))?;
        Ok(Embedding {
            values,
            normalized: true,
        })
    }

    fn check(values: &[F]) -> Result<()> {
        if values.is_empty() {
            return Err(Error::Input("embedding must have at least 1 dimension".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("embedding contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn into_values(self) -> Vec<F> {
        self.values
    }
}

impl Embedding<f64> {
    /// Casts to f32, the index storage precision. The cast of a normalized
    /// vector stays within ~1e-7 of unit norm.
    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

/// Cosine similarity, clamped to [-1, 1]. When both sides are normalized
/// this is exactly the (clamped) dot product.
pub fn cosine_sim<F: Scalar>(a: &Embedding<F>, b: &Embedding<F>) -> Result<F> {
    if a.dims() != b.dims() {
        return Err(Error::Input(format!(
            "cosine_sim dimension mismatch: {} vs {}",
            a.dims(),
            b.dims()
        )));
    }
    let d = num::dot(a.values(), b.values());
    let sim = if a.normalized && b.normalized {
        d
    } else {
        let na = num::l2_norm(a.values());
        let nb = num::l2_norm(b.values());
        if na <= F::zero() || nb <= F::zero() {
            return Err(Error::Numeric("cosine_sim of zero vector".into()));
        }
        d / (na * nb)
    };
    Ok(sim.min(F::one()).max(-F::one()))
}

/// Trainable linear map applied on top of a frozen base embedder.
///
/// Stored row-major; `b` is optional. Serialized as
/// `{"d_in", "d_out", "W": [...], "b": [...]?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead {
    pub d_in: usize,
    pub d_out: usize,
    /// Row-major `d_out × d_in` matrix.
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    #[serde(rename = "b", default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
}

impl ProjectionHead {
    pub fn new(d_in: usize, d_out: usize, w: Vec<f64>, bias: Option<Vec<f64>>) -> Result<Self> {
        let head = ProjectionHead { d_in, d_out, w, bias };
        head.validate()?;
        Ok(head)
    }

    /// The identity map (no bias); stands in for the pre-trained head.
    pub fn identity(dims: usize) -> Self {
        let mut w = vec![0.0; dims * dims];
        for i in 0..dims {
            w[i * dims + i] = 1.0;
        }
        ProjectionHead {
            d_in: dims,
            d_out: dims,
            w,
            bias: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_out == 0 {
            return Err(Error::Input("projection head dims must be ≥ 1".into()));
        }
        if self.w.len() != self.d_in * self.d_out {
            return Err(Error::Input(format!(
                "projection head W has {} entries, expected {}×{}",
                self.w.len(),
                self.d_out,
                self.d_in
            )));
        }
        if let Some(b) = &self.bias {
            if b.len() != self.d_out {
                return Err(Error::Input(format!(
                    "projection head b has {} entries, expected {}",
                    b.len(),
                    self.d_out
                )));
            }
        }
        if self.w.iter().any(|v| !v.is_finite())
            || self.bias.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::Numeric("projection head has non-finite entries".into()));
        }
        Ok(())
    }

    /// `W·x + b` without normalization.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.d_in);
        let mut y = vec![0.0; self.d_out];
        for (r, out) in y.iter_mut().enumerate() {
            let row = &self.w[r * self.d_in..(r + 1) * self.d_in];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            if let Some(b) = &self.bias {
                acc += b[r];
            }
            *out = acc;
        }
        y
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let head: ProjectionHead = serde_json::from_slice(&bytes)?;
        head.validate()?;
        Ok(head)
    }

    /// Content fingerprint, stable across runs.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("head serializes");
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }
}

/// Applies a projection head to an embedding and re-normalizes.
///
/// Any positive scalar multiple of `W` yields the same output: the
/// normalization absorbs scale.
pub fn project(head: &ProjectionHead, e: &Embedding<f64>) -> Result<Embedding<f64>> {
    if e.dims() != head.d_in {
        return Err(Error::Input(format!(
            "project: embedding dims {} != head d_in {}",
            e.dims(),
            head.d_in
        )));
    }
    let y = head.affine(e.values());
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("projection produced non-finite values".into()));
    }
    Embedding::unit(y)
}

/// Contract for pluggable embedding providers.
///
/// Implementations must be deterministic for a given input (the hash
/// provider bitwise so), return L2-normalized vectors of a fixed
/// dimension, and be safe to call concurrently.
pub trait TextEmbedder: Send + Sync {
    fn dims(&self) -> usize;

    /// Embeds one non-empty text.
    fn embed(&self, text: &str) -> Result<Embedding<f64>>;

    /// Batch embedding; the default maps [`TextEmbedder::embed`], remote
    /// providers override it with one round trip.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<f64>>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }

    /// Identifies the embedding function (provider, dims, head). Indexes
    /// record it and search refuses to run against a different one.
    fn fingerprint(&self) -> String;
}

impl<T: TextEmbedder + ?Sized> TextEmbedder for Arc<T> {
    fn dims(&self) -> usize {
        (**self).dims()
    }
    fn embed(&self, text: &str) -> Result<Embedding<f64>> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<f64>>> {
        (**self).embed_batch(texts)
    }
    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

/// The `[embedding]` section of the unified config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    /// "hash" | "remote" | "projected"
    pub provider: String,
    pub dims: usize,
    /// Remote service base URL (provider = "remote", or base = "remote").
    pub endpoint: String,
    /// Path to a projection-head JSON file (provider = "projected").
    pub head_path: String,
    /// Base provider under the head: "hash" | "remote".
    pub base: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: "hash".into(),
            dims: 256,
            endpoint: String::new(),
            head_path: String::new(),
            base: "hash".into(),
            timeout_ms: 5_000,
            retries: 3,
            backoff_ms: 100,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        match self.provider.as_str() {
            "hash" | "remote" | "projected" => {}
            other => {
                return Err(Error::Config(format!(
                    "embedding.provider must be hash|remote|projected, got '{other}'"
                )))
            }
        }
        if self.dims == 0 {
            return Err(Error::Config("embedding.dims must be ≥ 1".into()));
        }
        if self.provider == "remote" && self.endpoint.is_empty() {
            return Err(Error::Config(
                "embedding.endpoint required for provider = \"remote\"".into(),
            ));
        }
        if self.provider == "projected" {
            if self.head_path.is_empty() {
                return Err(Error::Config(
                    "embedding.head_path required for provider = \"projected\"".into(),
                ));
            }
            match self.base.as_str() {
                "hash" => {}
                "remote" if !self.endpoint.is_empty() => {}
                "remote" => {
                    return Err(Error::Config(
                        "embedding.endpoint required for base = \"remote\"".into(),
                    ))
                }
                other => {
                    return Err(Error::Config(format!(
                        "embedding.base must be hash|remote, got '{other}'"
                    )))
                }
            }
        }
        Ok(())
    }

    fn base_provider(&self, kind: &str) -> Result<Arc<dyn TextEmbedder>> {
        Ok(match kind {
            "hash" => Arc::new(HashEmbedder::new(self.dims)?),
            "remote" => Arc::new(RemoteEmbedder::new(
                &self.endpoint,
                self.dims,
                RemoteOptions {
                    timeout_ms: self.timeout_ms,
                    retries: self.retries,
                    backoff_ms: self.backoff_ms,
                },
            )?),
            other => return Err(Error::Config(format!("unknown provider '{other}'"))),
        })
    }
}

/// Builds the provider described by the config.
pub fn build_embedder(cfg: &EmbeddingConfig) -> Result<Arc<dyn TextEmbedder>> {
    cfg.validate()?;
    match cfg.provider.as_str() {
        "projected" => {
            let base = cfg.base_provider(&cfg.base)?;
            let head = ProjectionHead::load_json(Path::new(&cfg.head_path))?;
            Ok(Arc::new(ProjectedEmbedder::new(base, head)?))
        }
        kind => cfg.base_provider(kind),
    }
}
