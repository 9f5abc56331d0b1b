//! Chat-completion gateway: prompt templates, a replay backend for offline
//! runs, and an OpenAI-compatible HTTP backend.

mod http;
mod replay;
mod template;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use http::{HttpBackend, RetryPolicy, Transport, TransportError, UreqTransport};
pub use replay::{load_transcript, RecordingBackend, ReplayBackend, TranscriptRecord, WILDCARD_DIGEST};
pub use template::{PromptTemplate, TemplateCatalog, TemplateId};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("template {template} is missing placeholder `{key}`")]
    MissingPlaceholder { template: TemplateId, key: String },
    #[error("no template registered for {0}")]
    UnknownTemplate(TemplateId),
    #[error("template {id} is malformed: {reason}")]
    BadTemplate { id: TemplateId, reason: String },
    #[error("transport failed after {attempts} attempts: {last}")]
    TransportExhausted { attempts: u32, last: String },
    #[error("provider rejected the request with status {status}: {body}")]
    ProviderRejected { status: u16, body: String },
    #[error("provider reply could not be decoded: {0}")]
    BadReply(String),
    #[error("replay transcript has no entry for {template} / {digest}")]
    ReplayMiss { template: String, digest: String },
    #[error("malformed transcript at line {line}: {reason}")]
    MalformedTranscript { line: usize, reason: String },
    #[error("{}: {reason}", path.display())]
    Io { path: PathBuf, reason: String },
    #[error("credential variable `{0}` is not set")]
    MissingCredential(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub credential: String,
}

impl Default for ChatConfig {
    fn default() -> Self {
        ChatConfig {
            model_id: "gpt-4.1".into(),
            temperature: 0.0,
            max_output_tokens: 4096,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            credential: "OPENAI_API_KEY".into(),
        }
    }
}

/// A rendered prompt plus the keys replay matching uses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptCall {
    pub template_id: TemplateId,
    pub binding_digest: String,
    pub prompt: String,
}

impl PromptCall {
    pub fn prompt_digest(&self) -> String {
        hex::encode(Sha256::digest(self.prompt.as_bytes()))
    }
}

/// Stable digest of a binding set (order-independent, length-prefixed).
pub fn binding_digest(bindings: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in bindings {
        h.update((k.len() as u64).to_le_bytes());
        h.update(k.as_bytes());
        h.update((v.len() as u64).to_le_bytes());
        h.update(v.as_bytes());
    }
    hex::encode(h.finalize())
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, call: &PromptCall, config: &ChatConfig) -> Result<String, GatewayError>;
}

/// Renders agent prompts and sends them to a backend.
pub struct Gateway {
    catalog: TemplateCatalog,
    backend: Box<dyn ChatBackend>,
    config: ChatConfig,
}

impl Gateway {
    pub fn new(catalog: TemplateCatalog, backend: Box<dyn ChatBackend>, config: ChatConfig) -> Self {
        Gateway { catalog, backend, config }
    }

    /// Bundled templates in front of a replay transcript.
    pub fn replay(backend: ReplayBackend) -> Result<Self, GatewayError> {
        Ok(Gateway::new(TemplateCatalog::bundled()?, Box::new(backend), ChatConfig::default()))
    }

    pub fn catalog(&self) -> &TemplateCatalog {
        &self.catalog
    }

    pub fn config(&self) -> &ChatConfig {
        &self.config
    }

    pub fn render(&self, id: TemplateId, bindings: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        self.catalog.render(id, bindings)
    }

    pub fn ask(&self, id: TemplateId, bindings: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        let call = PromptCall {
            template_id: id,
            binding_digest: binding_digest(bindings),
            prompt: self.render(id, bindings)?,
        };
        log::debug!("prompt {} ({} bytes)", id, call.prompt.len());
        self.backend.complete(&call, &self.config)
    }
}

/// Small helper for building binding maps.
pub fn bindings<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
