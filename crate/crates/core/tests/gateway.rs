use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use protoforge_core::gateway::{
    record, Backend, Cassette, CassetteEntry, FinishReason, GatewayError, GenerationRequest,
    LiveBackend, LiveConfig, RecordingBackend, ReplayBackend, ScriptedBackend, Usage,
};

const SECRET: &str = "sk-test-0123456789abcdef";

struct Mock {
    url: String,
    requests: Arc<Mutex<Vec<String>>>,
    peak: Arc<AtomicUsize>,
}

fn ok_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 5}
    })
    .to_string()
}

/// Serves scripted (status, body) pairs, one per connection; the last one repeats.
fn mock(script: Vec<(u16, String)>, delay: Duration) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let peak = Arc::new(AtomicUsize::new(0));
    let live = Arc::new(AtomicUsize::new(0));
    let (reqs, pk) = (requests.clone(), peak.clone());
    std::thread::spawn(move || {
        let script = Arc::new(script);
        let n = Arc::new(AtomicUsize::new(0));
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let (reqs, pk, live, script, n) =
                (reqs.clone(), pk.clone(), live.clone(), script.clone(), n.clone());
            std::thread::spawn(move || {
                let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                pk.fetch_max(now, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                head.push_str(&String::from_utf8_lossy(&body));
                reqs.lock().unwrap().push(head);
                std::thread::sleep(delay);
                let i = n.fetch_add(1, Ordering::SeqCst).min(script.len() - 1);
                let (status, body) = &script[i];
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
                live.fetch_sub(1, Ordering::SeqCst);
            });
        }
    });
    Mock { url, requests, peak }
}

fn live(url: &str) -> LiveBackend {
    let mut c = LiveConfig::new(url, "test-model");
    c.api_key = Some(SECRET.into());
    c.backoff_base = Duration::ZERO;
    LiveBackend::new(c).unwrap()
}

fn req(q: &str) -> GenerationRequest {
    GenerationRequest::user("test-model", q)
}

fn write_cassette(path: &Path, entries: &[(&GenerationRequest, &str)]) {
    let mut c = Cassette::default();
    for (r, text) in entries {
        c.upsert(CassetteEntry {
            hash: r.hash(),
            model: r.model_id.clone(),
            temperature: r.temperature,
            response_text: text.to_string(),
            usage: Usage::default(),
        });
    }
    c.save(path).unwrap();
}

#[test]
fn replay_returns_recorded_text() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    let r = req("q");
    write_cassette(&path, &[(&r, "(defprotocol p basic ...)")]);
    let b = ReplayBackend::open(&path).unwrap();
    assert_eq!(b.model_id(), "test-model");
    let a = b.generate(&r).unwrap();
    assert_eq!(a.text, "(defprotocol p basic ...)");
    assert_eq!(a.finish_reason, FinishReason::Stop);
    assert_eq!(a, b.generate(&r).unwrap());
    match b.generate(&req("other")) {
        Err(GatewayError::ReplayMiss { hash, .. }) => assert_eq!(hash, req("other").hash()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn record_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let src = ScriptedBackend::new(
        "test-model",
        vec![Ok("first".into()), Ok("second".into()), Ok("third".into())],
    );
    let a = record(&req("a"), &src, &path).unwrap();
    let b = record(&req("b"), &src, &path).unwrap();
    let replay = ReplayBackend::open(&path).unwrap();
    assert_eq!(replay.generate(&req("a")).unwrap().text, a.text);
    assert_eq!(replay.generate(&req("b")).unwrap().text, b.text);

    let lines = || std::fs::read_to_string(&path).unwrap().lines().count();
    assert_eq!(lines(), 2);
    let hashes: Vec<_> = replay.cassette().entries().iter().map(|e| e.hash.clone()).collect();
    assert_ne!(hashes[0], hashes[1]);

    // same request again: overwritten in place
    record(&req("a"), &src, &path).unwrap();
    assert_eq!(lines(), 2);
    let replay = ReplayBackend::open(&path).unwrap();
    assert_eq!(replay.generate(&req("a")).unwrap().text, "third");
}

#[test]
fn recording_wrapper_serializes_writes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.jsonl");
    let rec = Arc::new(
        RecordingBackend::new(ScriptedBackend::new("test-model", vec![Ok("x".into())]), &path)
            .unwrap(),
    );
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let rec = rec.clone();
            std::thread::spawn(move || rec.generate(&req(&format!("q{i}"))).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(Cassette::load(&path).unwrap().len(), 8);
}

#[test]
fn live_success_and_wire_format() {
    let m = mock(vec![(200, ok_body("(herald \"x\")"))], Duration::ZERO);
    let r = live(&m.url).generate(&req("hello")).unwrap();
    assert_eq!(r.text, "(herald \"x\")");
    assert_eq!(r.usage, Usage { prompt_tokens: 11, completion_tokens: 5 });
    let seen = m.requests.lock().unwrap()[0].clone();
    assert!(seen.starts_with("POST /chat/completions"));
    assert!(seen.to_ascii_lowercase().contains(&format!("authorization: bearer {SECRET}").to_ascii_lowercase()));
    let body: serde_json::Value =
        serde_json::from_str(&seen[seen.find('{').unwrap()..]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "user");
    assert!(body["max_tokens"].as_u64().unwrap() > 0);
}

#[test]
fn live_retries_transient_then_succeeds() {
    let m = mock(
        vec![(503, "{}".into()), (429, "{}".into()), (200, ok_body("done"))],
        Duration::ZERO,
    );
    assert_eq!(live(&m.url).generate(&req("q")).unwrap().text, "done");
    assert_eq!(m.requests.lock().unwrap().len(), 3);
}

#[test]
fn live_gives_up_after_cap() {
    let m = mock(vec![(429, "{}".into())], Duration::ZERO);
    assert_eq!(live(&m.url).generate(&req("q")), Err(GatewayError::RateLimited(3)));
    assert_eq!(m.requests.lock().unwrap().len(), 3);

    let m = mock(vec![(500, "{}".into())], Duration::ZERO);
    assert!(matches!(live(&m.url).generate(&req("q")), Err(GatewayError::Network(_))));
}

#[test]
fn live_auth_failure_has_no_secret() {
    let m = mock(vec![(401, format!("{{\"error\":\"bad key {SECRET}\"}}"))], Duration::ZERO);
    let err = live(&m.url).generate(&req("q")).unwrap_err();
    assert!(matches!(err, GatewayError::Auth(_)));
    assert!(!err.to_string().contains(SECRET));
    assert!(!format!("{err:?}").contains(SECRET));
    // auth errors are not retried
    assert_eq!(m.requests.lock().unwrap().len(), 1);
}

#[test]
fn echoed_secret_is_redacted() {
    let m = mock(vec![(400, format!("{{\"echo\":\"{SECRET}\"}}"))], Duration::ZERO);
    let err = live(&m.url).generate(&req("q")).unwrap_err();
    assert!(!err.to_string().contains(SECRET), "{err}");
    let m = mock(vec![(200, format!("not json {SECRET}"))], Duration::ZERO);
    let err = live(&m.url).generate(&req("q")).unwrap_err();
    assert!(matches!(err, GatewayError::MalformedResponse(_)));
    assert!(!err.to_string().contains(SECRET), "{err}");
}

#[test]
fn recorded_cassette_has_no_secret() {
    let m = mock(vec![(200, ok_body("answer"))], Duration::ZERO);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("live.jsonl");
    record(&req("q"), &live(&m.url), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("answer"));
    assert!(!text.contains(SECRET));
}

#[test]
fn unreachable_host_is_network_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = live(&format!("http://127.0.0.1:{port}")).generate(&req("q")).unwrap_err();
    assert!(matches!(err, GatewayError::Network(_)));
}

#[test]
fn in_flight_cap_is_enforced() {
    let m = mock(vec![(200, ok_body("x"))], Duration::from_millis(60));
    let mut c = LiveConfig::new(&m.url, "test-model");
    c.max_in_flight = 2;
    let b = Arc::new(LiveBackend::new(c).unwrap());
    let hs: Vec<_> = (0..6)
        .map(|i| {
            let b = b.clone();
            std::thread::spawn(move || b.generate(&req(&format!("{i}"))).unwrap())
        })
        .collect();
    for h in hs {
        h.join().unwrap();
    }
    assert_eq!(m.requests.lock().unwrap().len(), 6);
    assert!(m.peak.load(Ordering::SeqCst) <= 2);
}
