//! Deterministic signed feature hashing.
//!
//! Features of a text are its whitespace-split token unigrams (prefixed
//! `t:`) and the character trigrams of the full text (prefixed `c:`,
//! whitespace included). Each occurrence of a feature adds ±1 to the
//! bucket `fnv1a64(feature) mod dims`; the sign comes from the hash's
//! top bit. The accumulated vector is L2-normalized.
//!
//! Pinned: FNV-1a, 64-bit, offset basis 0xcbf29ce484222325, prime
//! 0x100000001b3. Changing any of this changes every embedding, which is
//! why the fingerprint carries a version tag.

use crate::error::{Error, Result};
use crate::Embedding;

use super::TextEmbedder;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a. Also used for content fingerprints and seed derivation.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// The built-in offline provider: pure, thread-safe, bitwise deterministic.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dims: usize,
}

impl HashEmbedder {
    pub fn new(dims: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::Config("hash embedder dims must be ≥ 1".into()));
        }
        Ok(HashEmbedder { dims })
    }

    fn add_feature(&self, acc: &mut [f64], feature: &str) {
        let h = fnv1a64(feature.as_bytes());
        let bucket = (h % self.dims as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign;
    }
}

impl TextEmbedder for HashEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, text: &str) -> Result<Embedding<f64>> {
        if text.is_empty() {
            return Err(Error::Input("cannot embed empty text".into()));
        }
        let mut acc = vec![0.0; self.dims];
        for token in text.split_whitespace() {
            self.add_feature(&mut acc, &format!("t:{token}"));
        }
        let chars: Vec<char> = text.chars().collect();
        for win in chars.windows(3) {
            let tri: String = win.iter().collect();
            self.add_feature(&mut acc, &format!("c:{tri}"));
        }
        Embedding::unit(acc)
            .map_err(|_| Error::Numeric(format!("features of {text:?} cancel to a zero vector")))
    }

    fn fingerprint(&self) -> String {
        format!("hash-fnv1a64-v1:d{}", self.dims)
    }
}
