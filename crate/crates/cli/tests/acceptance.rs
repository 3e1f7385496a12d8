//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit when any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use protoforge_core::context::TemplateRegistry;
use protoforge_core::cpsa::{analyze, format_unit, lint, lower, validate_unit, Term};
use protoforge_core::dataset::{load_corpus, read_jsonl, Split};
use protoforge_core::diag::{Code, Severity};
use protoforge_core::eval::{load_suite, score_clarity, score_completeness, score_correctness, GoldChecklist};
use protoforge_core::fixtures::SPLIT_SEED;
use protoforge_core::gateway::ScriptedBackend;
use protoforge_core::pipeline::{translate, Deps, PipelineConfig};
use protoforge_core::sexpr::{parse, print, PrintStyle};
use protoforge_core::testkit::{random_sexpr, random_unit};

const CORE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core");
const BLANCHET: &str = include_str!("../../core/data/corpus/blanchet.scm");
const MUTUAL_AUTH: &str = include_str!("../../core/data/corpus/mutual_auth.scm");
const MUTUAL_AUTH_QUERY: &str = include_str!("../../core/data/corpus/mutual_auth_query.txt");

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_protoforge"))
        .args(args)
        .env_remove("MODELFORGE_BACKEND")
        .env_remove("MODELFORGE_MAX_ATTEMPTS")
        .env_remove("MODELFORGE_API_KEY")
        .output()
        .expect("binary runs")
}

fn within(t: Instant, limit: Duration) -> Result<Duration, String> {
    let took = t.elapsed();
    if took > limit {
        return Err(format!("took {took:?}, limit {limit:?}"));
    }
    Ok(took)
}

fn gold() -> GoldChecklist {
    load_suite(&Path::new(CORE).join("data/eval/suite.json")).unwrap().remove(0).checklist
}

fn blanchet_fixture() -> Check {
    let t = Instant::now();
    let a = analyze(BLANCHET);
    ensure!(a.unit.protocols.len() == 1, "{} protocols", a.unit.protocols.len());
    ensure!(a.unit.skeletons.len() == 2, "{} skeletons", a.unit.skeletons.len());
    ensure!(a.error_count() == 0, "errors: {:?}", a.diagnostics);
    let formatted = format_unit(&a.unit);
    let again = analyze(&formatted);
    ensure!(again.unit == a.unit, "fmt output lowers to a different unit");
    ensure!(format_unit(&again.unit) == formatted, "fmt is not idempotent");
    let took = within(t, Duration::from_secs(1))?;
    Ok(format!("1 protocol, 2 skeletons, 0 errors, fmt round-trips ({took:?})"))
}

/// Depth left open at end of text, counting outside strings and comments.
fn open_depth(text: &str) -> i64 {
    let (mut depth, mut in_str, mut in_comment, mut escaped) = (0i64, false, false, false);
    for c in text.chars() {
        if in_comment {
            in_comment = c != '\n';
        } else if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
        } else {
            match c {
                ';' => in_comment = true,
                '"' => in_str = true,
                '(' => depth += 1,
                ')' => depth -= 1,
                _ => {}
            }
        }
    }
    depth
}

fn mutual_auth_defect() -> Check {
    let t = Instant::now();
    ensure!(open_depth(MUTUAL_AUTH) == 1, "oracle depth {}", open_depth(MUTUAL_AUTH));
    let parsed = parse(MUTUAL_AUTH);
    let opens = parsed.diagnostics.iter().filter(|d| d.code == Code::UnbalancedOpen).count();
    let errors = parsed.diagnostics.iter().filter(|d| d.severity == Severity::Error).count();
    ensure!(opens == 1 && errors == 1, "parse diagnostics {:?}", parsed.diagnostics);

    let fixed = format!("{})", MUTUAL_AUTH.trim_end());
    ensure!(open_depth(&fixed) == 0, "repair still unbalanced");
    let parsed = parse(&fixed);
    ensure!(parsed.diagnostics.is_empty(), "{:?}", parsed.diagnostics);
    let (unit, lowering) = lower(&parsed.forms);
    ensure!(unit.protocols.len() == 1, "no protocol after repair");
    ensure!(!lowering.iter().any(|d| d.is_error()), "{lowering:?}");
    let shadows: Vec<_> = lint(&unit).into_iter().filter(|d| d.code == Code::ShadowsBuiltin).collect();
    ensure!(shadows.len() == 1, "{shadows:?}");
    let at = &fixed[shadows[0].span.start_byte..shadows[0].span.end_byte];
    ensure!(at.contains("pubk"), "shadowing finding points at {at:?}");
    let took = within(t, Duration::from_secs(1))?;
    Ok(format!("one UnbalancedOpen; repaired text flags `pubk` ({took:?})"))
}

fn round_trips() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..1000 {
        let tree = random_sexpr(&mut rng, 8);
        let style = if i % 2 == 0 {
            PrintStyle::Compact
        } else {
            PrintStyle::Indented(rng.gen_range(10..120))
        };
        let text = print(&tree, style);
        let back = parse(&text);
        ensure!(back.diagnostics.is_empty(), "tree {i}: {:?}", back.diagnostics);
        ensure!(back.forms == [tree.clone()], "tree {i} differs after parse: {text}");
    }
    for i in 0..500 {
        let unit = random_unit(&mut rng);
        let text = format_unit(&unit);
        let parsed = parse(&text);
        ensure!(parsed.diagnostics.is_empty(), "unit {i}: {:?}", parsed.diagnostics);
        let (back, diags) = lower(&parsed.forms);
        ensure!(diags.iter().all(|d| d.code == Code::UnsupportedForm), "unit {i}: {diags:?}");
        ensure!(back == unit, "unit {i} differs after lowering:\n{text}");
    }
    Ok("1000 trees and 500 units, 0 failures".into())
}

const FRAGMENTS: &[&str] = &[
    "(", ")", "(", ")", " ", "\n", "\"", ";", "defprotocol", "defrole", "defskeleton", "vars",
    "trace", "send", "recv", "enc", "pubk", "privk", "invk", "ltk", "cat", "hash", "name", "text",
    "skey", "akey", "non-orig", "uniq-orig", "basic", "a", "b", "n", "k", "herald", "é", "λ", "#",
    "'", "-12", "\\", "\u{0}",
];

fn fuzz_input(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..3) {
        0 => {
            let bytes: Vec<u8> = (0..rng.gen_range(0..256)).map(|_| rng.gen()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        }
        1 => (0..rng.gen_range(0..120))
            .map(|_| FRAGMENTS[rng.gen_range(0..FRAGMENTS.len())])
            .collect::<Vec<_>>()
            .join(" "),
        _ => {
            let base = if rng.gen() { BLANCHET } else { MUTUAL_AUTH };
            let mut chars: Vec<char> = base.chars().collect();
            for _ in 0..rng.gen_range(1..6) {
                if chars.is_empty() {
                    break;
                }
                let at = rng.gen_range(0..chars.len());
                match rng.gen_range(0..3) {
                    0 => {
                        chars.remove(at);
                    }
                    1 => chars.insert(at, ['(', ')', '"', ';'][rng.gen_range(0..4)]),
                    _ => chars.truncate(at.max(1)),
                }
            }
            chars.into_iter().collect()
        }
    }
}

fn fuzz() -> Check {
    let t = Instant::now();
    let gold = gold();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..10_000 {
        let text = fuzz_input(&mut rng);
        let run = catch_unwind(AssertUnwindSafe(|| {
            let parsed = parse(&text);
            let (unit, _) = lower(&parsed.forms);
            validate_unit(&unit);
            [
                score_correctness(&text),
                score_clarity(&text),
                score_completeness(&text, &gold),
            ]
        }));
        match run {
            Ok(scores) => ensure!(
                scores.iter().all(|s| (0.0..=1.0).contains(s)),
                "input {i}: scores {scores:?} for {text:?}"
            ),
            Err(_) => return Err(format!("input {i} panicked: {text:?}")),
        }
    }
    let took = within(t, Duration::from_secs(60))?;
    Ok(format!("10000 inputs, no panics, scores in [0,1] ({took:?})"))
}

fn field(stdout: &str, key: &str) -> Option<u64> {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .and_then(|v| v.trim().parse().ok())
}

fn dataset() -> Check {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = dir.path().join("corpus");
    let corpus = corpus.to_str().unwrap();
    let export = dir.path().join("train.jsonl");
    let seed = SPLIT_SEED.to_string();
    let steps: [Vec<&str>; 4] = [
        vec!["dataset", "synth", "--out", corpus, "--backend", "builtin:dataset"],
        vec!["dataset", "augment", "--corpus", corpus, "--backend", "builtin:dataset"],
        vec!["dataset", "split", "--corpus", corpus, "--fraction", "0.7", "--seed", &seed],
        vec!["dataset", "export", "--corpus", corpus, "--out", export.to_str().unwrap(), "--epochs", "3"],
    ];
    let mut last = String::new();
    for args in &steps {
        let out = bin(args);
        ensure!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        last = String::from_utf8_lossy(&out.stdout).into_owned();
    }

    let pairs = load_corpus(Path::new(corpus)).map_err(|e| e.to_string())?;
    ensure!(pairs.len() == 340, "{} pairs", pairs.len());
    let seeds: BTreeSet<_> = pairs.iter().map(|p| p.provenance.seed_id.as_str()).collect();
    ensure!(seeds.len() == 10, "{} seed groups", seeds.len());
    let side = |s: Split| -> BTreeSet<&str> {
        pairs
            .iter()
            .filter(|p| p.split == Some(s))
            .map(|p| p.provenance.seed_id.as_str())
            .collect()
    };
    let (train, test) = (side(Split::Train), side(Split::Test));
    let n_train = pairs.iter().filter(|p| p.split == Some(Split::Train)).count();
    ensure!((n_train, pairs.len() - n_train) == (238, 102), "split {n_train}/{}", pairs.len() - n_train);
    ensure!(train.is_disjoint(&test), "seed groups on both sides: {:?}", train.intersection(&test));

    ensure!(read_jsonl(&export).map_err(|e| e.to_string())?.len() == 340, "export line count");
    let tokens = field(&last, "estimated_training_tokens").ok_or("no token estimate printed")?;
    let target = 568_200f64;
    let drift = (tokens as f64 - target) / target;
    ensure!(drift.abs() <= 0.20, "{tokens} tokens is {:+.1}% off", drift * 100.0);
    let took = within(t, Duration::from_secs(30))?;
    Ok(format!("340 pairs, 238/102, no leakage, {tokens} training tokens ({:+.1}%) ({took:?})", drift * 100.0))
}

fn eval_grid() -> Check {
    let run = || {
        let out = bin(&["eval", "run", "--csv"]);
        (out.status.success(), out.stdout)
    };
    let (ok_a, a) = run();
    let (ok_b, b) = run();
    ensure!(ok_a && ok_b, "eval run failed");
    ensure!(a == b, "two runs differ");
    let text = String::from_utf8_lossy(&a);
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    for col in ["query_id", "model_id", "correctness", "clarity", "completeness"] {
        ensure!(header.contains(col), "header lacks {col}: {header}");
    }
    let rows: Vec<&str> = lines.collect();
    ensure!(rows.len() == 15, "{} rows", rows.len());
    let cells: BTreeSet<(&str, &str)> = rows
        .iter()
        .map(|r| {
            let mut it = r.split(',');
            (it.next().unwrap_or(""), it.next().unwrap_or(""))
        })
        .collect();
    let queries: BTreeSet<_> = cells.iter().map(|c| c.0).collect();
    let models: BTreeSet<_> = cells.iter().map(|c| c.1).collect();
    ensure!(cells.len() == 15 && queries.len() == 3 && models.len() == 5, "grid {queries:?} x {models:?}");
    Ok("15 rows (3 queries x 5 models), byte-identical".into())
}

fn monotonicity() -> Check {
    let gold = gold();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..200 {
        let unit = random_unit(&mut rng);
        let mut broken = unit.clone();
        broken.protocols[0].roles[0].non_orig.push(Term::var("zz-undeclared"));
        let (before, after) = (score_correctness(&format_unit(&unit)), score_correctness(&format_unit(&broken)));
        ensure!(after <= before, "mutant {i}: correctness {before} -> {after}");

        let mut fuller = unit.clone();
        let missing = gold.expected_variables.iter().find(|v| !fuller.declares(v));
        if let Some(v) = missing {
            let sort = protoforge_core::cpsa::Sort::Text;
            fuller.protocols[0].roles[0].vars.insert(v, sort, protoforge_core::diag::SourceSpan::synthetic());
        }
        let (before, after) = (
            score_completeness(&format_unit(&unit), &gold),
            score_completeness(&format_unit(&fuller), &gold),
        );
        ensure!(after >= before, "mutant {i}: completeness {before} -> {after}");
    }
    Ok("200 mutants".into())
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let query = dir.path().join("query.txt");
    std::fs::write(&query, MUTUAL_AUTH_QUERY).map_err(|e| e.to_string())?;
    let q = query.to_str().unwrap();
    let once = || bin(&["translate", q, "--backend", "builtin:translate", "--attempts", "1"]);
    let (a, b) = (once(), once());
    ensure!(a.status.code() == Some(0), "exit {:?}", a.status.code());
    ensure!(!a.stdout.is_empty(), "no definition printed");
    ensure!(a.stdout == b.stdout && a.stderr == b.stderr, "single-pass runs differ");
    let attempts = |o: &Output| String::from_utf8_lossy(&o.stderr).lines().filter(|l| l.starts_with("attempt ")).count();
    ensure!(attempts(&a) == 1, "{} attempts under --attempts 1", attempts(&a));

    let repaired = bin(&["translate", q, "--backend", "builtin:translate", "--attempts", "3"]);
    ensure!(attempts(&repaired) == 2, "repair took {} attempts", attempts(&repaired));

    let registry = TemplateRegistry::builtin();
    for budget in 1..=4u32 {
        let scripted = ScriptedBackend::new("m", vec![Ok(MUTUAL_AUTH.to_string())]);
        let deps = Deps {
            registry: &registry,
            backend: &scripted,
            gold: None,
        };
        let config = PipelineConfig {
            max_attempts: budget,
            ..PipelineConfig::default()
        };
        let r = translate(MUTUAL_AUTH_QUERY, &config, &deps).map_err(|e| e.to_string())?;
        ensure!(
            scripted.calls() == budget as usize && r.attempts.len() == budget as usize,
            "budget {budget}: {} calls",
            scripted.calls()
        );
    }
    Ok("single pass byte-identical; repair stops within budget".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("blanchet fixture", blanchet_fixture),
        ("mutual-auth defect", mutual_auth_defect),
        ("round-trip properties", round_trips),
        ("fuzz robustness", fuzz),
        ("dataset pipeline", dataset),
        ("eval grid", eval_grid),
        ("metric monotonicity", monotonicity),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
