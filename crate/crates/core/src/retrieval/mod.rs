//! Module-scoped semantic symbol search used to repair unknown symbols.

mod index;
mod resolve;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use index::{build_index, cosine, query, EmbeddingIndex, IndexEntry};
pub use resolve::{discover_modules, JavaModule, RetrievalBudget, RetrievalOutcome, Resolution, Retriever};

use crate::llm::{GatewayError, RetryPolicy, Transport};
use crate::tokens::identifier_tokens;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("module root {0} does not exist")]
    MissingModule(std::path::PathBuf),
    #[error("query has dimension {got}, index has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedder failed: {0}")]
    Embedder(String),
    #[error("{}: {reason}", path.display())]
    Io { path: std::path::PathBuf, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Text to fixed-dimension vectors.
pub trait Embedder: Send + Sync {
    fn id(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrievalError>;
}

/// Deterministic feature hashing of identifier tokens, L2-normalized.
/// Needs no network and gives byte-identical vectors for identical text.
#[derive(Clone, Debug)]
pub struct HashEmbedder {
    pub dimension: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dimension: 256 }
    }
}

impl HashEmbedder {
    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dimension];
        for token in identifier_tokens(text) {
            let h = Sha256::digest(token.as_bytes());
            let x = u64::from_le_bytes(h[..8].try_into().expect("8 bytes"));
            let bucket = (x % self.dimension as u64) as usize;
            v[bucket] += if h[8] & 1 == 0 { 1.0 } else { -1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> String {
        format!("feature-hash-{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrievalError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// OpenAI-compatible `/embeddings` client.
pub struct HttpEmbedder {
    pub transport: Box<dyn Transport>,
    pub retry: RetryPolicy,
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub credential: String,
    pub dimension: usize,
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> String {
        format!("http:{}", self.model)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrievalError> {
        let key = std::env::var(&self.credential).map_err(|_| GatewayError::MissingCredential(self.credential.clone()))?;
        let body = json!({"model": self.model, "input": texts});
        let text = self.retry.post(self.transport.as_ref(), &self.endpoint, Some(&key), &body)?;
        let reply: Value = serde_json::from_str(&text).map_err(|e| RetrievalError::Embedder(e.to_string()))?;
        let data = reply["data"].as_array().ok_or_else(|| RetrievalError::Embedder("reply has no `data` array".into()))?;
        if data.len() != texts.len() {
            return Err(RetrievalError::Embedder(format!("{} vectors for {} inputs", data.len(), texts.len())));
        }
        data.iter()
            .map(|d| {
                let v: Vec<f32> = d["embedding"]
                    .as_array()
                    .ok_or_else(|| RetrievalError::Embedder("entry has no `embedding`".into()))?
                    .iter()
                    .map(|x| x.as_f64().unwrap_or(0.0) as f32)
                    .collect();
                if v.len() != self.dimension {
                    return Err(RetrievalError::DimensionMismatch {
                        expected: self.dimension,
                        got: v.len(),
                    });
                }
                Ok(v)
            })
            .collect()
    }
}
