//! HTTP client for an external embedding service.
//!
//! Protocol: `POST {endpoint}/embed` with body `{"texts": ["...", ...]}`,
//! response `{"embeddings": [[f, ...], ...], "dims": N}`. Anything else
//! (non-200 status, wrong dims, wrong count) is an error. Transport and
//! timeout failures are retried with exponential backoff; protocol
//! violations are not.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Embedding;

use super::TextEmbedder;

#[derive(Debug, Clone, Copy)]
pub struct RemoteOptions {
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        RemoteOptions {
            timeout_ms: 5_000,
            retries: 3,
            backoff_ms: 100,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
    dims: usize,
}

pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    endpoint: String,
    dims: usize,
    opts: RemoteOptions,
}

impl RemoteEmbedder {
    pub fn new(endpoint: &str, dims: usize, opts: RemoteOptions) -> Result<Self> {
        if endpoint.is_empty() {
            return Err(Error::Config("remote embedder endpoint is empty".into()));
        }
        if dims == 0 {
            return Err(Error::Config("remote embedder dims must be ≥ 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(opts.timeout_ms))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(RemoteEmbedder {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            dims,
            opts,
        })
    }

    fn classify(e: reqwest::Error) -> Error {
        if e.is_timeout() {
            Error::Timeout(e.to_string())
        } else {
            Error::Transport(e.to_string())
        }
    }

    fn post_once(&self, texts: &[&str]) -> Result<EmbedResponse> {
        let url = format!("{}/embed", self.endpoint);
        let resp = self
            .client
            .post(&url)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(Self::classify)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::Transport(format!(
                "{url} returned HTTP {status}"
            )));
        }
        let body: EmbedResponse = resp
            .json()
            .map_err(|e| Error::MalformedResponse(e.to_string()))?;
        Ok(body)
    }

    fn post_with_retries(&self, texts: &[&str]) -> Result<EmbedResponse> {
        let mut attempt = 0u32;
        loop {
            match self.post_once(texts) {
                Ok(r) => return Ok(r),
                Err(e @ (Error::Transport(_) | Error::Timeout(_))) => {
                    if attempt >= self.opts.retries {
                        return Err(e);
                    }
                    let backoff = self.opts.backoff_ms.saturating_mul(1 << attempt.min(16));
                    std::thread::sleep(Duration::from_millis(backoff));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl TextEmbedder for RemoteEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, text: &str) -> Result<Embedding<f64>> {
        Ok(self.embed_batch(&[text])?.pop().expect("one embedding"))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<f64>>> {
        if texts.iter().any(|t| t.is_empty()) {
            return Err(Error::Input("cannot embed empty text".into()));
        }
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = self.post_with_retries(texts)?;
        if body.dims != self.dims {
            return Err(Error::MalformedResponse(format!(
                "service reports dims {}, configured {}",
                body.dims, self.dims
            )));
        }
        if body.embeddings.len() != texts.len() {
            return Err(Error::MalformedResponse(format!(
                "requested {} embeddings, got {}",
                texts.len(),
                body.embeddings.len()
            )));
        }
        body.embeddings
            .into_iter()
            .map(|v| {
                if v.len() != self.dims {
                    return Err(Error::MalformedResponse(format!(
                        "embedding has {} dims, expected {}",
                        v.len(),
                        self.dims
                    )));
                }
                Embedding::unit(v)
                    .map_err(|e| Error::MalformedResponse(format!("unusable embedding: {e}")))
            })
            .collect()
    }

    fn fingerprint(&self) -> String {
        format!("remote:d{}@{}", self.dims, self.endpoint)
    }
}
