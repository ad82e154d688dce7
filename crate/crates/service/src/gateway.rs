//! Completion backends. Failures never reach the caller: after the configured
//! retries the gateway answers with a fallback built from the bundle's facts.

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use cdss_core::prompt::PromptBundle;

use crate::config::GatewayConfig;

pub const FALLBACK_PREAMBLE: &str = "The assistant is temporarily unavailable; here are the system's own findings:";
pub const MOCK_BACKEND: &str = "mock";
pub const HTTP_BACKEND: &str = "http";
pub const FALLBACK_BACKEND: &str = "fallback";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("gateway misconfigured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub bundle: PromptBundle,
    pub model: String,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub latency_ms: f64,
    pub backend: String,
    /// True when `text` is the fallback rather than a backend answer.
    pub degraded: bool,
}

#[async_trait]
pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> &str;
    async fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError>;
}

/// Deterministic template echoing the bundle's shape.
pub fn mock_text(bundle: &PromptBundle) -> String {
    format!(
        "[tone={}] [attachments={}] [facts={}] {}",
        bundle.tone.as_str(),
        bundle.attachments.len(),
        bundle.qualitative_facts.len(),
        bundle.user_message
    )
}

pub fn fallback_text(bundle: &PromptBundle) -> String {
    let mut text = FALLBACK_PREAMBLE.to_string();
    if bundle.qualitative_facts.is_empty() {
        text.push_str("\n- No explanations have been generated for this conversation yet.");
    }
    for fact in &bundle.qualitative_facts {
        text.push_str("\n- ");
        text.push_str(fact);
    }
    text
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

#[async_trait]
impl CompletionBackend for MockBackend {
    fn id(&self) -> &str {
        MOCK_BACKEND
    }

    async fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        Ok(mock_text(&req.bundle))
    }
}

/// Posts `{model, messages}` to a chat-completion endpoint.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::Client,
    url: String,
    key: Option<String>,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, key: Option<String>) -> Result<Self, GatewayError> {
        let client = reqwest::Client::builder().build().map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self { client, url: url.into(), key })
    }
}

fn text_part(s: &str) -> Value {
    json!({"type": "text", "data": s})
}

/// Wire body for the HTTP backend.
pub fn request_body(req: &CompletionRequest) -> Value {
    let b = &req.bundle;
    let mut system = b.system_directive.clone();
    if !b.qualitative_facts.is_empty() {
        system.push_str("\nFindings:");
        for f in &b.qualitative_facts {
            system.push_str("\n- ");
            system.push_str(f);
        }
    }
    if let Some(precise) = &b.precise_facts {
        system.push_str("\nPrecise values requested by the user:");
        for f in precise {
            system.push_str(&format!("\n- {} = {}", f.name, f.value));
        }
    }
    let mut messages = vec![json!({"role": "system", "content": [text_part(&system)]})];
    for turn in &b.history {
        messages.push(json!({"role": turn.role.as_str(), "content": [text_part(&turn.content)]}));
    }
    let mut content = vec![text_part(&b.user_message)];
    for a in &b.attachments {
        content.push(text_part(&a.caption));
        content.push(json!({"type": "image", "data": a.img64}));
    }
    messages.push(json!({"role": "user", "content": content}));
    json!({"model": req.model, "messages": messages})
}

/// Accepts `{"text": ..}`, `{"content": ..}` or the common
/// `{"choices": [{"message": {"content": ..}}]}` shape.
pub fn parse_response(body: &Value) -> Result<String, GatewayError> {
    let text = body
        .pointer("/choices/0/message/content")
        .or_else(|| body.get("text"))
        .or_else(|| body.get("content"))
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::MalformedResponse("no text field".into()))?;
    if text.trim().is_empty() {
        return Err(GatewayError::MalformedResponse("empty text".into()));
    }
    Ok(text.to_string())
}

#[async_trait]
impl CompletionBackend for HttpBackend {
    fn id(&self) -> &str {
        HTTP_BACKEND
    }

    async fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let mut call = self.client.post(&self.url).timeout(req.timeout).json(&request_body(req));
        if let Some(key) = &self.key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().await.map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout(req.timeout)
            } else {
                GatewayError::BackendUnavailable(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(GatewayError::BackendUnavailable(format!("status {status}")));
        }
        let body: Value = resp.json().await.map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        parse_response(&body)
    }
}

#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn CompletionBackend>,
    model: String,
    timeout: Duration,
    retries: u32,
}

impl Gateway {
    pub fn new(backend: Arc<dyn CompletionBackend>, model: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        Self { backend, model: model.into(), timeout, retries }
    }

    pub fn mock() -> Self {
        Self::new(Arc::new(MockBackend), "mock", Duration::from_secs(30), 0)
    }

    pub fn from_config(cfg: &GatewayConfig) -> Result<Self, GatewayError> {
        if !(cfg.timeout_s.is_finite() && cfg.timeout_s > 0.0) {
            return Err(GatewayError::Config(format!("timeout_s must be positive, got {}", cfg.timeout_s)));
        }
        let timeout = Duration::from_secs_f64(cfg.timeout_s);
        let backend: Arc<dyn CompletionBackend> = if cfg.mock {
            Arc::new(MockBackend)
        } else {
            let url = cfg.url.clone().ok_or_else(|| GatewayError::Config("gateway.url is required when gateway.mock = false".into()))?;
            Arc::new(HttpBackend::new(url, cfg.key.clone())?)
        };
        Ok(Self::new(backend, cfg.model.clone(), timeout, cfg.retries))
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    async fn attempt(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        match tokio::time::timeout(req.timeout, self.backend.complete(req)).await {
            Ok(r) => r,
            Err(_) => Err(GatewayError::Timeout(req.timeout)),
        }
    }

    /// Always yields a response; backend failures degrade to the fallback.
    pub async fn complete(&self, bundle: PromptBundle) -> CompletionResponse {
        let started = Instant::now();
        let req = CompletionRequest { bundle, model: self.model.clone(), timeout: self.timeout };
        let mut tries = 0;
        loop {
            match self.attempt(&req).await {
                Ok(text) if !text.trim().is_empty() => {
                    return CompletionResponse {
                        text,
                        latency_ms: started.elapsed().as_secs_f64() * 1e3,
                        backend: self.backend.id().to_string(),
                        degraded: false,
                    };
                }
                Ok(_) => tracing::warn!(backend = self.backend.id(), "backend returned empty text"),
                Err(e) => tracing::warn!(backend = self.backend.id(), error = %e, attempt = tries + 1, "completion failed"),
            }
            if tries >= self.retries {
                break;
            }
            tries += 1;
            let jitter = rand::rng().random_range(100..=400);
            tokio::time::sleep(Duration::from_millis(jitter)).await;
        }
        CompletionResponse {
            text: fallback_text(&req.bundle),
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
            backend: FALLBACK_BACKEND.to_string(),
            degraded: true,
        }
    }
}
