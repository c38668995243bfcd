//! Base provider composed with a projection head.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::Embedding;

use super::{project, ProjectionHead, TextEmbedder};

/// The fine-tuned encoder: a frozen base embedder followed by a trained
/// linear head. Output dimension is the head's `d_out`.
pub struct ProjectedEmbedder {
    base: Arc<dyn TextEmbedder>,
    head: ProjectionHead,
}

impl ProjectedEmbedder {
    pub fn new(base: Arc<dyn TextEmbedder>, head: ProjectionHead) -> Result<Self> {
        head.validate()?;
        if head.d_in != base.dims() {
            return Err(Error::Config(format!(
                "projection head d_in {} != base embedder dims {}",
                head.d_in,
                base.dims()
            )));
        }
        Ok(ProjectedEmbedder { base, head })
    }

    pub fn head(&self) -> &ProjectionHead {
        &self.head
    }
}

impl TextEmbedder for ProjectedEmbedder {
    fn dims(&self) -> usize {
        self.head.d_out
    }

    fn embed(&self, text: &str) -> Result<Embedding<f64>> {
        let base = self.base.embed(text)?;
        project(&self.head, &base)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<f64>>> {
        self.base
            .embed_batch(texts)?
            .iter()
            .map(|e| project(&self.head, e))
            .collect()
    }

    fn fingerprint(&self) -> String {
        format!(
            "proj:{}+head:{}",
            self.base.fingerprint(),
            self.head.fingerprint()
        )
    }
}
