use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatConfig, GatewayError, PromptCall};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Minimal JSON-over-HTTP POST. Returns the status code and body text;
/// `Err` only for transport-level failures (connect, timeout, ...).
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<(u16, String), TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(600))
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<(u16, String), TransportError> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = bearer {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| TransportError(e.to_string()))?;
        Ok((status, text))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before retry `n` (1-based) is `base * 2^(n-1)`.
    pub base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// POSTs with retries on transport errors and 5xx. 4xx is terminal.
    pub fn post(&self, transport: &dyn Transport, url: &str, bearer: Option<&str>, body: &Value) -> Result<String, GatewayError> {
        let mut last = String::new();
        for attempt in 1..=self.attempts.max(1) {
            if attempt > 1 {
                std::thread::sleep(self.base * 2u32.pow(attempt - 2));
            }
            match transport.post_json(url, bearer, body) {
                Ok((status, text)) if (200..300).contains(&status) => return Ok(text),
                Ok((status, text)) if status >= 500 || status == 429 => {
                    log::warn!("attempt {attempt}: provider status {status}");
                    last = format!("status {status}: {text}");
                }
                Ok((status, text)) => return Err(GatewayError::ProviderRejected { status, body: text }),
                Err(e) => {
                    log::warn!("attempt {attempt}: {e}");
                    last = e.0;
                }
            }
        }
        Err(GatewayError::TransportExhausted {
            attempts: self.attempts.max(1),
            last,
        })
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    transport: Box<dyn Transport>,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(transport: Box<dyn Transport>, retry: RetryPolicy) -> Self {
        HttpBackend { transport, retry }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, call: &PromptCall, config: &ChatConfig) -> Result<String, GatewayError> {
        let key = std::env::var(&config.credential).map_err(|_| GatewayError::MissingCredential(config.credential.clone()))?;
        let body = json!({
            "model": config.model_id,
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
            "messages": [{"role": "user", "content": call.prompt}],
        });
        let text = self.retry.post(self.transport.as_ref(), &config.endpoint, Some(&key), &body)?;
        let reply: Value = serde_json::from_str(&text).map_err(|e| GatewayError::BadReply(e.to_string()))?;
        if let Some(usage) = reply.get("usage") {
            log::info!(
                "{}: prompt_tokens={} completion_tokens={}",
                call.template_id,
                usage["prompt_tokens"],
                usage["completion_tokens"]
            );
        }
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::BadReply("missing choices[0].message.content".into()))
    }
}
