use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Backend, FinishReason, GatewayError, GenerationRequest, GenerationResult, Usage};

pub const API_KEY_ENV: &str = "MODELFORGE_API_KEY";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Clone)]
pub struct LiveConfig {
    pub api_base: String,
    pub model_id: String,
    pub api_key: Option<String>,
    /// Total tries per request, including the first.
    pub max_attempts: u32,
    /// Wait before retry n is `backoff_base * 2^(n-1)`.
    pub backoff_base: Duration,
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl std::fmt::Debug for LiveConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveConfig")
            .field("api_base", &self.api_base)
            .field("model_id", &self.model_id)
            .field("api_key", &self.api_key.as_ref().map(|_| "[redacted]"))
            .field("max_attempts", &self.max_attempts)
            .field("backoff_base", &self.backoff_base)
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

impl LiveConfig {
    pub fn new(api_base: &str, model_id: &str) -> Self {
        LiveConfig {
            api_base: api_base.trim_end_matches('/').to_string(),
            model_id: model_id.to_string(),
            api_key: None,
            max_attempts: 3,
            backoff_base: Duration::from_secs(1),
            max_in_flight: 4,
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads the credential from `MODELFORGE_API_KEY`.
    pub fn with_env_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }
}

/// Counting gate for concurrent requests.
struct Gate {
    busy: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.busy.lock().unwrap_or_else(|p| p.into_inner());
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.busy.lock().unwrap_or_else(|p| p.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

/// Chat-completion client over HTTP with bearer auth.
pub struct LiveBackend {
    id: String,
    config: LiveConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

enum Failure {
    Retry(GatewayError),
    Fatal(GatewayError),
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<Self, GatewayError> {
        if config.max_attempts == 0 {
            return Err(GatewayError::Config("max_attempts must be at least 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(LiveBackend {
            id: format!("live:{}", config.model_id),
            gate: Gate {
                busy: Mutex::new(0),
                freed: Condvar::new(),
                cap: config.max_in_flight.max(1),
            },
            config,
            client,
        })
    }

    fn redact(&self, s: &str) -> String {
        match &self.config.api_key {
            Some(k) if !k.is_empty() => s.replace(k.as_str(), "[redacted]"),
            _ => s.to_string(),
        }
    }

    fn attempt(&self, request: &GenerationRequest) -> Result<GenerationResult, Failure> {
        let body = json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let url = format!("{}/chat/completions", self.config.api_base);
        let mut req = self.client.post(&url).json(&body);
        if let Some(k) = &self.config.api_key {
            req = req.bearer_auth(k);
        }
        let started = Instant::now();
        let resp = req
            .send()
            .map_err(|e| Failure::Retry(GatewayError::Network(self.redact(&e.to_string()))))?;
        let status = resp.status().as_u16();
        let text = resp.text().unwrap_or_default();
        let latency_ms = started.elapsed().as_millis() as u64;
        match status {
            200..=299 => parse_completion(&text, latency_ms)
                .map_err(|e| Failure::Fatal(GatewayError::MalformedResponse(self.redact(&e)))),
            401 | 403 => Err(Failure::Fatal(GatewayError::Auth(format!(
                "credential rejected (HTTP {status})"
            )))),
            429 => Err(Failure::Retry(GatewayError::RateLimited(self.config.max_attempts))),
            500..=599 => Err(Failure::Retry(GatewayError::Network(format!("HTTP {status}")))),
            _ => Err(Failure::Fatal(GatewayError::Network(self.redact(&format!(
                "HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            ))))),
        }
    }
}

fn parse_completion(body: &str, latency_ms: u64) -> Result<GenerationResult, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or("no choices in response")?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or("first choice has no message content")?
        .to_string();
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") if !text.is_empty() => FinishReason::Length,
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Error,
        Some(_) => FinishReason::Stop,
    };
    let count = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
    Ok(GenerationResult {
        text,
        finish_reason,
        usage: Usage {
            prompt_tokens: count("prompt_tokens"),
            completion_tokens: count("completion_tokens"),
        },
        latency_ms,
    })
}

impl Backend for LiveBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        request.check()?;
        let _permit = self.gate.acquire();
        let mut last = None;
        for n in 0..self.config.max_attempts {
            if n > 0 {
                std::thread::sleep(self.config.backoff_base * 2u32.pow(n - 1));
            }
            match self.attempt(request) {
                Ok(r) => return Ok(r),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(e)) => {
                    tracing::warn!(attempt = n + 1, error = %e, "transient failure");
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_first_choice() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"(x)"},"finish_reason":"stop"}],"usage":{"prompt_tokens":3,"completion_tokens":2}}"#;
        let r = parse_completion(body, 7).unwrap();
        assert_eq!(r.text, "(x)");
        assert_eq!(r.finish_reason, FinishReason::Stop);
        assert_eq!(r.usage, Usage { prompt_tokens: 3, completion_tokens: 2 });
        assert!(parse_completion(r#"{"choices":[]}"#, 0).is_err());
        assert!(parse_completion("nope", 0).is_err());
    }

    #[test]
    fn debug_hides_key() {
        let mut c = LiveConfig::new("http://x", "m");
        c.api_key = Some("sk-very-secret".into());
        assert!(!format!("{c:?}").contains("sk-very-secret"));
    }
}
