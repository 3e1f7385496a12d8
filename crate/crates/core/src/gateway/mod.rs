//! A uniform generation interface over chat-completion backends.

mod live;
mod replay;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use live::{LiveBackend, LiveConfig, API_KEY_ENV, DEFAULT_API_BASE};
pub use replay::{record, Cassette, CassetteEntry, RecordingBackend, ReplayBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: ChatRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: ChatRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: ChatRole::Assistant, content: content.into() }
    }
}

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl GenerationRequest {
    /// A request at temperature 0.
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        GenerationRequest {
            model_id: model_id.into(),
            messages,
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    pub fn user(model_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self::new(model_id, vec![ChatMessage::user(content)])
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidRequest(m.to_string()));
        if self.messages.is_empty() {
            return bad("no messages");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a finite value >= 0");
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive");
        }
        for (i, m) in self.messages.iter().enumerate() {
            if m.role == ChatRole::System && i > 0 {
                return bad("a system message may only come first");
            }
            if m.content.is_empty() && m.role != ChatRole::Assistant {
                return bad("only assistant messages may be empty");
            }
        }
        Ok(())
    }

    /// Hex sha256 over the canonical JSON of model, messages and
    /// temperature. Object keys are sorted, there is no whitespace, and
    /// the temperature is written as a JSON number by `serde_json`.
    pub fn hash(&self) -> String {
        let canonical = serde_json::json!({
            "model": self.model_id,
            "messages": self.messages,
            "temperature": self.temperature,
        });
        crate::context::sha256_hex(canonical.to_string().as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("network error: {0}")]
    Network(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {0} attempts")]
    RateLimited(u32),
    #[error("no cassette entry for request {hash} (model {model})")]
    ReplayMiss { hash: String, model: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("cannot write cassette: {0}")]
    CassetteWrite(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Something that turns a request into a completion. Handles are shared
/// across worker threads.
pub trait Backend: Send + Sync {
    /// Stable identifier, e.g. `replay:gpt-a`.
    fn id(&self) -> &str;
    fn model_id(&self) -> &str;
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError>;
}

impl fmt::Debug for dyn Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Backend({})", self.id())
    }
}

/// Returns canned responses in order, one per call, ignoring the request.
/// Useful for driving multi-step flows in tests.
pub struct ScriptedBackend {
    id: String,
    model: String,
    script: Vec<Result<String, GatewayError>>,
    next: std::sync::atomic::AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(model: &str, script: Vec<Result<String, GatewayError>>) -> Self {
        ScriptedBackend {
            id: format!("scripted:{model}"),
            model: model.to_string(),
            script,
            next: Default::default(),
        }
    }

    pub fn calls(&self) -> usize {
        self.next.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_id(&self) -> &str {
        &self.model
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        request.check()?;
        let i = self.next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        // the last step repeats once the script runs out
        let step = self
            .script
            .get(i)
            .or(self.script.last())
            .ok_or_else(|| GatewayError::Config("empty script".into()))?;
        let text = step.clone()?;
        Ok(GenerationResult {
            usage: Usage {
                prompt_tokens: request.messages.iter().map(|m| m.content.len() as u64 / 4).sum(),
                completion_tokens: text.len() as u64 / 4,
            },
            text,
            finish_reason: FinishReason::Stop,
            latency_ms: 0,
        })
    }
}
