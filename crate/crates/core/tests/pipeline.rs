use proptest::prelude::*;

use protoforge_core::candidate::best_candidate;
use protoforge_core::context::TemplateRegistry;
use protoforge_core::cpsa::analyze;
use protoforge_core::diag::Code;
use protoforge_core::gateway::{Backend, GatewayError, ScriptedBackend};
use protoforge_core::pipeline::{
    open_backend, translate, Deps, Failure, PipelineConfig, Settings, Status, MAX_ATTEMPTS_CAP,
};

const BLANCHET: &str = include_str!("../data/corpus/blanchet.scm");
const MUTUAL_AUTH: &str = include_str!("../data/corpus/mutual_auth.scm");
const MUTUAL_AUTH_QUERY: &str = include_str!("../data/corpus/mutual_auth_query.txt");
const BLANCHET_QUERY: &str = include_str!("../data/corpus/blanchet_query.txt");

fn run(query: &str, backend: &dyn Backend, attempts: u32) -> protoforge_core::pipeline::TranslationResult {
    let registry = TemplateRegistry::builtin();
    let config = PipelineConfig {
        max_attempts: attempts,
        ..PipelineConfig::default()
    };
    let deps = Deps {
        registry: &registry,
        backend,
        gold: None,
    };
    translate(query, &config, &deps).unwrap()
}

fn builtin(name: &str) -> Box<dyn Backend> {
    open_backend(&format!("builtin:{name}"), &Settings::default()).unwrap()
}

#[test]
fn clean_on_first_attempt() {
    let backend = builtin("translate");
    let r = run(BLANCHET_QUERY, backend.as_ref(), 3);
    assert_eq!(r.status, Status::Clean);
    assert_eq!(r.attempts.len(), 1);
    assert_eq!(r.attempts[0].error_count, Some(0));
    assert_eq!(r.unit.as_ref().unwrap().protocols[0].name, "blanchet");
    assert!(r.failure.is_none());
}

#[test]
fn prose_only_exhausts_budget() {
    let backend = ScriptedBackend::new("m", vec![Ok("I cannot help with that request.".into())]);
    let r = run(MUTUAL_AUTH_QUERY, &backend, 2);
    assert_eq!(r.status, Status::Failed);
    assert_eq!(r.failure, Some(Failure::NoStructuredOutput));
    assert_eq!(r.attempts.len(), 2);
    assert_eq!(backend.calls(), 2);
}

#[test]
fn repair_loop_recovers() {
    // the unclosed defprotocol never lowers, so the missing protocol counts too
    let parsed = analyze(MUTUAL_AUTH);
    assert!(parsed.unit.protocols.is_empty());
    let expected_first = parsed.error_count() + 1;
    let backend = builtin("translate");
    let r = run(MUTUAL_AUTH_QUERY, backend.as_ref(), 3);
    assert_eq!(r.status, Status::Clean);
    assert_eq!(r.attempts.len(), 2);
    assert_eq!(r.attempts[0].error_count, Some(expected_first));
    assert_eq!(r.attempts[1].error_count, Some(0));
    assert_ne!(r.attempts[0].request_digest, r.attempts[1].request_digest);
    assert_eq!(r.final_text.trim(), BLANCHET.trim());
}

#[test]
fn single_pass_keeps_the_first_answer() {
    let backend = builtin("translate");
    let r = run(MUTUAL_AUTH_QUERY, backend.as_ref(), 1);
    assert_eq!(r.attempts.len(), 1);
    assert_eq!(r.status, Status::Failed);
    assert_eq!(r.failure, Some(Failure::NoProtocol));
    assert!(r.diagnostics.iter().any(|d| d.code == Code::UnbalancedOpen));
    let again = run(MUTUAL_AUTH_QUERY, backend.as_ref(), 1);
    assert_eq!(again.final_text, r.final_text);
    assert_eq!(again.diagnostics, r.diagnostics);
    assert_eq!(again.attempts, r.attempts);
}

#[test]
fn feedback_lists_codes() {
    // the retry request carries the first attempt's diagnostics
    struct Spy(std::sync::Mutex<Vec<String>>);
    impl Backend for Spy {
        fn id(&self) -> &str {
            "spy"
        }
        fn model_id(&self) -> &str {
            "m"
        }
        fn generate(
            &self,
            r: &protoforge_core::gateway::GenerationRequest,
        ) -> Result<protoforge_core::gateway::GenerationResult, GatewayError> {
            let mut seen = self.0.lock().unwrap();
            seen.push(r.messages[0].content.clone());
            let text = if seen.len() == 1 { MUTUAL_AUTH } else { BLANCHET };
            Ok(protoforge_core::gateway::GenerationResult {
                text: text.into(),
                finish_reason: protoforge_core::gateway::FinishReason::Stop,
                usage: Default::default(),
                latency_ms: 0,
            })
        }
    }
    let spy = Spy(Default::default());
    run(MUTUAL_AUTH_QUERY, &spy, 3);
    let seen = spy.0.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert!(seen[1].starts_with(&seen[0]));
    assert!(seen[1].contains("E-UNBALANCED-OPEN"));
}

#[test]
fn backend_errors_consume_attempts() {
    let backend = ScriptedBackend::new("m", vec![Err(GatewayError::Network("down".into()))]);
    let r = run(MUTUAL_AUTH_QUERY, &backend, 3);
    assert_eq!(r.status, Status::Failed);
    assert!(matches!(r.failure, Some(Failure::Backend(_))));
    assert_eq!(r.attempts.len(), 3);
    assert!(r.attempts.iter().all(|a| a.error_count.is_none()));

    let flaky = ScriptedBackend::new(
        "m",
        vec![Err(GatewayError::RateLimited(3)), Ok(BLANCHET.into())],
    );
    let r = run(MUTUAL_AUTH_QUERY, &flaky, 3);
    assert_eq!(r.status, Status::Clean);
    assert_eq!(r.attempts.len(), 2);
}

#[test]
fn attempt_bounds() {
    let registry = TemplateRegistry::builtin();
    let backend = ScriptedBackend::new("m", vec![Ok(BLANCHET.into())]);
    let deps = Deps {
        registry: &registry,
        backend: &backend,
        gold: None,
    };
    for bad in [0, MAX_ATTEMPTS_CAP + 1] {
        let config = PipelineConfig {
            max_attempts: bad,
            ..PipelineConfig::default()
        };
        assert!(translate(MUTUAL_AUTH_QUERY, &config, &deps).is_err());
    }
    assert_eq!(backend.calls(), 0);
}

#[test]
fn gold_checklist_scores() {
    let suite =
        protoforge_core::eval::load_suite(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/eval/suite.json")))
            .unwrap();
    let entry = suite.iter().find(|e| e.query_id == "mutual-auth").unwrap();
    let registry = TemplateRegistry::builtin();
    let backend = ScriptedBackend::new("m", vec![Ok(entry.reference.clone())]);
    let deps = Deps {
        registry: &registry,
        backend: &backend,
        gold: Some(&entry.checklist),
    };
    let r = translate(&entry.query_text, &PipelineConfig::default(), &deps).unwrap();
    let card = r.scorecard.unwrap();
    assert_eq!(card.correctness, 1.0);
    assert_eq!(card.completeness, 1.0);
}

fn response() -> impl Strategy<Value = Result<String, GatewayError>> {
    prop_oneof![
        Just(Ok(BLANCHET.to_string())),
        Just(Ok(MUTUAL_AUTH.to_string())),
        Just(Ok("no structure here".to_string())),
        Just(Ok("(defprotocol p basic (defrole r (vars) (trace (send x))))".to_string())),
        Just(Ok("(defprotocol p basic (defrole r (vars (x text)) (trace (send x) (recv y) (send z))))".to_string())),
        Just(Err(GatewayError::Network("x".into()))),
    ]
}

proptest! {
    #[test]
    fn budget_and_best_attempt(script in prop::collection::vec(response(), 1..8), attempts in 1u32..6) {
        let backend = ScriptedBackend::new("m", script.clone());
        let r = run(MUTUAL_AUTH_QUERY, &backend, attempts);
        prop_assert!(backend.calls() <= attempts as usize);
        prop_assert_eq!(backend.calls(), r.attempts.len());

        let served = (0..r.attempts.len()).map(|i| script.get(i).unwrap_or(script.last().unwrap()));
        let mut with_protocol = Vec::new();
        for step in served {
            if let Ok(text) = step {
                if let Some(c) = best_candidate(text) {
                    if c.has_protocol() {
                        with_protocol.push(c.error_count());
                    }
                }
            }
        }
        match with_protocol.iter().min() {
            Some(&least) => {
                prop_assert!(r.unit.is_some());
                prop_assert_eq!(r.error_count(), least);
            }
            None => prop_assert_eq!(r.status, Status::Failed),
        }
    }
}
