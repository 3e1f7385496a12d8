//! The controller: query to context to generation to checked definition,
//! with an optional bounded repair loop.

mod backends;
mod config;

use serde::{Deserialize, Serialize};

use crate::candidate::{best_candidate, Candidate};
use crate::context::{build_context, ContextError, TemplateRegistry};
use crate::cpsa::CpsaUnit;
use crate::diag::{Code, Diagnostic, SourceSpan};
use crate::eval::{score_all, GoldChecklist, ScoreCard};
use crate::gateway::{Backend, GenerationRequest, DEFAULT_MAX_OUTPUT_TOKENS};

pub use backends::{builtin_cassette, open_backend, BackendSpec, BUILTIN_CASSETTES};
pub use config::{ConfigError, Settings, ENV_PREFIX};

pub const MAX_ATTEMPTS_CAP: u32 = 10;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

/// Printed with every translation: generated definitions need expert review.
pub const REVIEW_NOTICE: &str = "NOTICE: generated definitions are drafts. A protocol analysis \
expert must review them before they are used for any security claim.";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub template_id: String,
    pub backend_id: String,
    pub max_attempts: u32,
    pub fail_on_lint: bool,
    pub output_path: Option<std::path::PathBuf>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            template_id: "default".into(),
            backend_id: "live".into(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            fail_on_lint: false,
            output_path: None,
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }
}

impl PipelineConfig {
    pub fn check(&self) -> Result<(), PipelineError> {
        if self.max_attempts == 0 || self.max_attempts > MAX_ATTEMPTS_CAP {
            return Err(PipelineError::Config(format!(
                "max_attempts must be between 1 and {MAX_ATTEMPTS_CAP}, got {}",
                self.max_attempts
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Clean,
    WithFindings,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Clean => "clean",
            Status::WithFindings => "with_findings",
            Status::Failed => "failed",
        }
    }
}

/// Why a translation produced no usable definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    #[error("no structured output in any attempt")]
    NoStructuredOutput,
    #[error("no defprotocol form in any attempt")]
    NoProtocol,
    #[error("backend error: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    /// Hash of the request sent on this attempt.
    pub request_digest: String,
    /// Errors in the best candidate; `None` when the backend failed.
    pub error_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TranslationResult {
    pub final_text: String,
    pub unit: Option<CpsaUnit>,
    pub diagnostics: Vec<Diagnostic>,
    pub attempts: Vec<Attempt>,
    pub scorecard: Option<ScoreCard>,
    pub status: Status,
    /// Why the run failed, when it did.
    pub failure: Option<Failure>,
}

impl TranslationResult {
    pub fn error_count(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.is_error()).count()
    }
}

pub struct Deps<'a> {
    pub registry: &'a TemplateRegistry,
    pub backend: &'a dyn Backend,
    /// Scored against when present.
    pub gold: Option<&'a GoldChecklist>,
}

/// Appends the previous attempt's errors to the context.
pub fn feedback_section(errors: &[Diagnostic]) -> String {
    let mut s = String::from(
        "\n\nYour previous answer was checked and has these problems:\n",
    );
    for d in errors {
        s.push_str(&format!("- {}: {}\n", d.code, d.message));
    }
    s.push_str("Reply with a corrected, complete definition.\n");
    s
}

fn no_output_diagnostic() -> Diagnostic {
    Diagnostic::new(
        Code::NoProtocol,
        SourceSpan::synthetic(),
        "the response contained no s-expressions",
    )
}

/// Runs up to `max_attempts` generations. Each retry carries the errors of
/// the one before. The attempt with the fewest errors is returned, the
/// earliest winning ties; an attempt with a protocol always beats one
/// without.
pub fn translate(
    query: &str,
    config: &PipelineConfig,
    deps: &Deps<'_>,
) -> Result<TranslationResult, PipelineError> {
    config.check()?;
    let context = build_context(query, &config.template_id, deps.registry)?;
    let mut attempts = Vec::new();
    // (attempt index, candidate)
    let mut best: Option<(usize, Candidate)> = None;
    let mut feedback: Option<Vec<Diagnostic>> = None;
    let mut last_failure = None;

    for n in 0..config.max_attempts as usize {
        let mut content = context.text.clone();
        if let Some(errors) = &feedback {
            content.push_str(&feedback_section(errors));
        }
        let mut request = GenerationRequest::user(deps.backend.model_id(), content);
        request.temperature = config.temperature;
        request.max_output_tokens = config.max_output_tokens;
        let digest = request.hash();
        let text = match deps.backend.generate(&request) {
            Ok(r) => r.text,
            Err(e) => {
                tracing::warn!(attempt = n + 1, error = %e, "generation failed");
                attempts.push(Attempt {
                    request_digest: digest,
                    error_count: None,
                    failure: Some(e.to_string()),
                });
                last_failure = Some(Failure::Backend(e.to_string()));
                continue;
            }
        };
        let cand = best_candidate(&text);
        let errors: Vec<Diagnostic> = match &cand {
            Some(c) => c.analysis.diagnostics.iter().filter(|d| d.is_error()).cloned().collect(),
            None => vec![no_output_diagnostic()],
        };
        attempts.push(Attempt {
            request_digest: digest,
            error_count: Some(errors.len()),
            failure: None,
        });
        if let Some(c) = cand {
            let better = match &best {
                None => true,
                Some((_, b)) => {
                    (!c.has_protocol(), c.error_count()) < (!b.has_protocol(), b.error_count())
                }
            };
            if better {
                best = Some((n, c));
            }
        }
        if errors.is_empty() {
            break;
        }
        feedback = Some(errors);
    }

    let Some((_, cand)) = best else {
        // only blame the backend when no response came back at all
        let failure = last_failure
            .filter(|_| attempts.iter().all(|a| a.failure.is_some()))
            .unwrap_or(Failure::NoStructuredOutput);
        return Ok(TranslationResult {
            final_text: String::new(),
            unit: None,
            diagnostics: Vec::new(),
            attempts,
            scorecard: None,
            status: Status::Failed,
            failure: Some(failure),
        });
    };
    let has_protocol = cand.has_protocol();
    let errors = cand.error_count();
    let scorecard = deps.gold.map(|g| score_all(&cand.text, g).0);
    let status = match (has_protocol, errors) {
        (true, 0) => Status::Clean,
        (true, _) => Status::WithFindings,
        (false, _) => Status::Failed,
    };
    Ok(TranslationResult {
        failure: (!has_protocol).then_some(Failure::NoProtocol),
        final_text: cand.text,
        unit: has_protocol.then_some(cand.analysis.unit),
        diagnostics: cand.analysis.diagnostics,
        attempts,
        scorecard,
        status,
    })
}
