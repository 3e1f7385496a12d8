use std::fmt::Display;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use protoforge_core::context::{load_templates, TemplateRegistry};
use protoforge_core::cpsa::{analyze, format_unit};
use protoforge_core::dataset::{
    augment_variance, builtin_seeds, export_jsonl, load_corpus, load_seeds, save_corpus, split,
    synthesize_pairs, Outcome, FINETUNE_SYSTEM_PROMPT,
};
use protoforge_core::diag::{registry_markdown, Diagnostic, Tally};
use protoforge_core::eval::{load_suite, parse_suite, render_csv, render_markdown, run_eval};
use protoforge_core::gateway::{Backend, Cassette, API_KEY_ENV};
use protoforge_core::pipeline::{
    open_backend, translate, Deps, Failure, Settings, Status, BUILTIN_CASSETTES, REVIEW_NOTICE,
};
use protoforge_core::sexpr::parse;

use crate::{BackendsCommand, Cli, Command, DatasetCommand, EvalCommand};

const SHIPPED_SUITE: &str = include_str!("../../core/data/eval/suite.json");
const SHIPPED_EVAL_BACKENDS: [&str; 5] = [
    "builtin:general-small",
    "builtin:general-medium",
    "builtin:general-large",
    "builtin:forge-base",
    "builtin:forge-tuned",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Clean,
    Findings,
    Failure,
}

impl Exit {
    pub fn code(self) -> u8 {
        match self {
            Exit::Clean => 0,
            Exit::Findings => 1,
            Exit::Failure => 2,
        }
    }
}

/// An operational failure, reported on stderr.
struct Fail(String);

impl<E: Display> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(e.to_string())
    }
}

type CmdResult = Result<Exit, Fail>;

fn settings(cli: &Cli) -> Result<Settings, Fail> {
    let g = &cli.global;
    let mut s = Settings::default();
    if let Some(path) = &g.config {
        let text = fs::read_to_string(path).map_err(|e| Fail(format!("{}: {e}", path.display())))?;
        s.apply_toml(&text, &path.display().to_string())?;
    }
    if let Some(b) = &g.backend {
        s.set("backend", b)?;
    }
    if let Some(t) = &g.template {
        s.set("template", t)?;
    }
    if let Some(n) = g.attempts {
        s.set("max_attempts", &n.to_string())?;
    }
    s.apply_env(std::env::vars())?;
    Ok(s)
}

fn registry(s: &Settings) -> Result<TemplateRegistry, Fail> {
    let mut reg = TemplateRegistry::builtin();
    if let Some(dir) = &s.template_dir {
        let loaded = load_templates(dir)?;
        for id in loaded.ids() {
            reg.insert(loaded.get(id).expect("listed id").clone());
        }
    }
    Ok(reg)
}

fn read_input(path: Option<&Path>) -> Result<String, Fail> {
    match path {
        None => read_stdin(),
        Some(p) if p == Path::new("-") => read_stdin(),
        Some(p) => fs::read_to_string(p).map_err(|e| Fail(format!("{}: {e}", p.display()))),
    }
}

fn read_stdin() -> Result<String, Fail> {
    let mut s = String::new();
    io::stdin().read_to_string(&mut s)?;
    Ok(s)
}

fn findings(diags: &[Diagnostic], fail_on_lint: bool) -> bool {
    if fail_on_lint {
        !diags.is_empty()
    } else {
        diags.iter().any(Diagnostic::is_error)
    }
}

fn verdict(strict: bool, found: bool) -> Exit {
    if strict && found {
        Exit::Findings
    } else {
        Exit::Clean
    }
}

pub fn run(cli: &Cli) -> Exit {
    let result = dispatch(cli);
    match result {
        Ok(o) => o,
        Err(Fail(msg)) => {
            eprintln!("error: {msg}");
            Exit::Failure
        }
    }
}

fn dispatch(cli: &Cli) -> CmdResult {
    let s = settings(cli)?;
    let strict = cli.global.strict || s.fail_on_lint;
    match &cli.command {
        Command::Translate { query, output } => cmd_translate(&s, strict, query.as_deref(), output.as_deref()),
        Command::Validate { file } => cmd_validate(&s, strict, file),
        Command::Fmt { file, check, write } => cmd_fmt(file, *check, *write),
        Command::Dataset(d) => cmd_dataset(&s, d),
        Command::Eval(EvalCommand::Run {
            suite,
            backends,
            out_dir,
            csv,
        }) => cmd_eval(&s, suite.as_deref(), backends, out_dir.as_deref(), *csv),
        Command::Backends(BackendsCommand::List) => cmd_backends(&s),
        Command::Diagnostics => {
            print!("{}", registry_markdown());
            Ok(Exit::Clean)
        }
    }
}

fn cmd_translate(s: &Settings, strict: bool, query: Option<&Path>, output: Option<&Path>) -> CmdResult {
    let query = read_input(query)?;
    let reg = registry(s)?;
    let backend = open_backend(&s.backend, s)?;
    let config = s.pipeline();
    let deps = Deps {
        registry: &reg,
        backend: backend.as_ref(),
        gold: None,
    };
    let r = translate(&query, &config, &deps)?;

    let mut err = io::stderr().lock();
    for (i, a) in r.attempts.iter().enumerate() {
        let what = match (&a.error_count, &a.failure) {
            (Some(n), _) => format!("{n} errors"),
            (None, Some(f)) => f.clone(),
            (None, None) => "no result".into(),
        };
        writeln!(err, "attempt {}: {what}", i + 1)?;
    }
    for d in &r.diagnostics {
        writeln!(err, "{d}")?;
    }
    writeln!(err, "status: {}", r.status.as_str())?;
    if let Some(f) = &r.failure {
        writeln!(err, "failure: {f}")?;
    }
    writeln!(err, "\n{REVIEW_NOTICE}")?;

    if !r.final_text.is_empty() {
        match output {
            Some(path) => fs::write(path, &r.final_text).map_err(|e| Fail(format!("{}: {e}", path.display())))?,
            None => {
                let mut out = io::stdout().lock();
                out.write_all(r.final_text.as_bytes())?;
                if !r.final_text.ends_with('\n') {
                    out.write_all(b"\n")?;
                }
            }
        }
    }
    if let Some(Failure::Backend(msg)) = &r.failure {
        return Err(Fail(msg.clone()));
    }
    let found = r.status != Status::Clean || findings(&r.diagnostics, s.fail_on_lint);
    Ok(verdict(strict, found))
}

fn cmd_validate(s: &Settings, strict: bool, file: &Path) -> CmdResult {
    let text = read_input(Some(file))?;
    let a = analyze(&text);
    let mut out = io::stdout().lock();
    for d in &a.diagnostics {
        writeln!(out, "{}:{d}", file.display())?;
    }
    writeln!(out, "{}", Tally::of(&a.diagnostics))?;
    Ok(verdict(strict, findings(&a.diagnostics, s.fail_on_lint)))
}

fn cmd_fmt(file: &Path, check: bool, write: bool) -> CmdResult {
    let text = read_input(Some(file))?;
    let parsed = parse(&text);
    if parsed.has_errors() {
        for d in &parsed.diagnostics {
            eprintln!("{}:{d}", file.display());
        }
        return Ok(Exit::Findings);
    }
    let formatted = format_unit(&analyze(&text).unit);
    if check {
        if formatted == text {
            return Ok(Exit::Clean);
        }
        eprintln!("{}: not in canonical form", file.display());
        return Ok(Exit::Findings);
    }
    if write {
        fs::write(file, &formatted).map_err(|e| Fail(format!("{}: {e}", file.display())))?;
    } else {
        print!("{formatted}");
    }
    Ok(Exit::Clean)
}

fn report_outcome(o: &Outcome) {
    for r in &o.rejected {
        eprintln!("dropped {}: {}", r.pair_id, r.reason);
    }
    println!("{} pairs, {} dropped", o.pairs.len(), o.rejected.len());
}

fn cmd_dataset(s: &Settings, cmd: &DatasetCommand) -> CmdResult {
    match cmd {
        DatasetCommand::Synth { out, seeds, per_seed } => {
            let seeds = match seeds {
                Some(dir) => load_seeds(dir)?,
                None => builtin_seeds(),
            };
            let backend = open_backend(&s.backend, s)?;
            let o = synthesize_pairs(&seeds, backend.as_ref(), *per_seed)?;
            save_corpus(out, &o.pairs)?;
            report_outcome(&o);
        }
        DatasetCommand::Augment {
            corpus,
            out,
            variants,
            rename_only,
        } => {
            let pairs = load_corpus(corpus)?;
            let backend: Option<Box<dyn Backend>> = if *rename_only {
                None
            } else {
                Some(open_backend(&s.backend, s)?)
            };
            let o = augment_variance(&pairs, backend.as_deref(), *variants)?;
            save_corpus(out.as_deref().unwrap_or(corpus), &o.pairs)?;
            report_outcome(&o);
        }
        DatasetCommand::Split { corpus, fraction, seed } => {
            let pairs = load_corpus(corpus)?;
            let (mut train, test) = split(&pairs, *fraction, *seed)?;
            println!("{} train, {} test", train.len(), test.len());
            train.extend(test);
            train.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
            save_corpus(corpus, &train)?;
        }
        DatasetCommand::Export {
            corpus,
            out,
            epochs,
            system_prompt,
            no_system_prompt,
        } => {
            let pairs = load_corpus(corpus)?;
            let prompt = match (system_prompt, no_system_prompt) {
                (_, true) => String::new(),
                (Some(p), _) => fs::read_to_string(p).map_err(|e| Fail(format!("{}: {e}", p.display())))?,
                (None, _) => FINETUNE_SYSTEM_PROMPT.to_string(),
            };
            let r = export_jsonl(&pairs, prompt.trim_end(), out, *epochs)?;
            println!("pairs: {}", r.pair_count);
            println!("train: {}", r.train_count);
            println!("test: {}", r.test_count);
            println!("estimated_tokens: {}", r.estimated_tokens);
            println!("epochs: {}", r.epochs);
            println!("estimated_training_tokens: {}", r.estimated_training_tokens);
        }
    }
    Ok(Exit::Clean)
}

fn cmd_eval(
    s: &Settings,
    suite: Option<&Path>,
    ids: &[String],
    out_dir: Option<&Path>,
    csv: bool,
) -> CmdResult {
    let suite = match suite {
        Some(p) => load_suite(p)?,
        None => parse_suite(SHIPPED_SUITE, "shipped suite")?,
    };
    let ids: Vec<String> = if ids.is_empty() {
        SHIPPED_EVAL_BACKENDS.iter().map(|s| s.to_string()).collect()
    } else {
        ids.to_vec()
    };
    let owned = ids
        .iter()
        .map(|id| open_backend(id, s))
        .collect::<Result<Vec<_>, _>>()?;
    let backends: Vec<&dyn Backend> = owned.iter().map(|b| b.as_ref()).collect();
    let report = run_eval(&suite, &backends, &registry(s)?, &s.template)?;
    let (csv_text, md) = (render_csv(&report), render_markdown(&report));
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_file(&dir.join("report.csv"), &csv_text)?;
        write_file(&dir.join("report.md"), &md)?;
    }
    print!("{}", if csv { &csv_text } else { &md });
    Ok(Exit::Clean)
}

fn write_file(path: &PathBuf, text: &str) -> Result<(), Fail> {
    fs::write(path, text).map_err(|e| Fail(format!("{}: {e}", path.display())))
}

fn cmd_backends(s: &Settings) -> CmdResult {
    for (name, text) in BUILTIN_CASSETTES {
        let c = Cassette::parse(text, name)?;
        let model = c.entries().first().map(|e| e.model.as_str()).unwrap_or("-");
        println!("builtin:{name:<16} model={model:<14} entries={}", c.len());
    }
    let key = if std::env::var_os(API_KEY_ENV).is_some() {
        "set"
    } else {
        "missing"
    };
    println!(
        "live                     model={} api_base={} {API_KEY_ENV}={key}",
        s.model_id, s.api_base
    );
    Ok(Exit::Clean)
}
