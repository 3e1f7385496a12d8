//! Builds the replay cassettes and the reference corpus shipped under
//! `data/`. Everything here is deterministic so the files can be rebuilt
//! and compared byte for byte.
//!
//! The dataset cassette is recorded from [`RuleWriter`], a template-driven
//! stand-in for a hosted model that writes protocol descriptions and
//! paraphrases. Eval cassettes pair each suite query with a hand-written
//! response per model under `data/eval/responses/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::context::TemplateRegistry;
use crate::cpsa::{analyze, CpsaUnit, Direction, Role, Skeleton, Sort, Term};
use crate::dataset::{
    augment_variance, builtin_seeds, split, QAPair, DEFAULT_PER_SEED, DEFAULT_TRAIN_FRACTION,
    DEFAULT_VARIANTS,
};
use crate::eval::load_suite;
use crate::gateway::{
    Backend, Cassette, CassetteEntry, FinishReason, GatewayError, GenerationRequest,
    GenerationResult, ScriptedBackend, Usage,
};
use crate::pipeline::{translate, Deps, PipelineConfig};

/// Model id recorded in the dataset cassette.
pub const WRITER_MODEL: &str = "spec-writer";
/// Model id recorded in the translate cassette.
pub const TRANSLATE_MODEL: &str = "forge-tuned";
/// Models with a recorded response for every eval query.
pub const EVAL_MODELS: [&str; 5] = [
    "general-small",
    "general-medium",
    "general-large",
    "forge-base",
    "forge-tuned",
];
pub const SPLIT_SEED: u64 = 7;

pub fn default_data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn rough_tokens(s: &str) -> u64 {
    s.len().div_ceil(4) as u64
}

fn fenced_body(prompt: &str) -> Option<&str> {
    let start = prompt.find("```\n")? + 4;
    let end = prompt.rfind("\n```")?;
    (end >= start).then(|| &prompt[start..end])
}

fn number_after(prompt: &str, marker: &str) -> Option<usize> {
    let rest = &prompt[prompt.find(marker)? + marker.len()..];
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

/// Answers the two prompt shapes the dataset forge sends: describe a
/// definition, or reword a description. Anything else is refused.
#[derive(Debug, Default)]
pub struct RuleWriter;

impl Backend for RuleWriter {
    fn id(&self) -> &str {
        "rules:spec-writer"
    }

    fn model_id(&self) -> &str {
        WRITER_MODEL
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        request.check()?;
        let prompt = &request.messages.last().expect("checked").content;
        let text = if prompt.starts_with("Write a natural-language specification") {
            let body = fenced_body(prompt)
                .ok_or_else(|| GatewayError::InvalidRequest("no definition in prompt".into()))?;
            let index = number_after(prompt, "This is description ").unwrap_or(1);
            describe(body, index)
        } else if prompt.starts_with("Rewrite the protocol specification") {
            let j = number_after(prompt, "This is rewrite ").unwrap_or(1);
            let question = prompt
                .split_once("\n---\n")
                .map(|(_, q)| q.trim_end())
                .ok_or_else(|| GatewayError::InvalidRequest("no text to rewrite".into()))?;
            paraphrase(question, j)
        } else {
            return Err(GatewayError::InvalidRequest("unrecognized prompt".into()));
        };
        Ok(GenerationResult {
            usage: Usage {
                prompt_tokens: request.messages.iter().map(|m| rough_tokens(&m.content)).sum(),
                completion_tokens: rough_tokens(&text),
            },
            text,
            finish_reason: FinishReason::Stop,
            latency_ms: 0,
        })
    }
}

#[derive(Clone, Copy)]
enum Style {
    Prose,
    Listing,
}

fn id(s: &str) -> String {
    format!("`{s}`")
}

fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn phrase(t: &Term, style: Style) -> String {
    use Style::*;
    match (t, style) {
        (Term::Var(v), _) => id(v),
        (Term::Tag(s), _) => format!("the constant \"{s}\""),
        (Term::PubKeyOf(x), Prose) => format!("the public key of {}", phrase(x, style)),
        (Term::PubKeyOf(x), Listing) => format!("the public key belonging to {}", phrase(x, style)),
        (Term::InvKeyOf(x), _) => match (x.as_ref(), style) {
            (Term::PubKeyOf(p), Prose) => format!("the private key of {}", phrase(p, style)),
            (Term::PubKeyOf(p), Listing) => {
                format!("the private key held by {}", phrase(p, style))
            }
            (_, Prose) => format!("the inverse of {}", phrase(x, style)),
            (_, Listing) => format!("the decryption key matching {}", phrase(x, style)),
        },
        (Term::LongTermKey(a, b), Prose) => format!(
            "the long-term key shared by {} and {}",
            phrase(a, style),
            phrase(b, style)
        ),
        (Term::LongTermKey(a, b), Listing) => format!(
            "the long-term key that {} and {} have in common",
            phrase(a, style),
            phrase(b, style)
        ),
        (Term::Cat(parts), Prose) => {
            let p: Vec<String> = parts.iter().map(|p| phrase(p, style)).collect();
            format!("the concatenation of {}", join_and(&p))
        }
        (Term::Cat(parts), Listing) => {
            let p: Vec<String> = parts.iter().map(|p| phrase(p, style)).collect();
            format!("[{}]", p.join(" | "))
        }
        (Term::Enc(p, k), _) => {
            let signed = matches!(k.as_ref(), Term::InvKeyOf(_));
            let verb = match (signed, style) {
                (true, Prose) => "signed with",
                (true, Listing) => "under the signature of",
                (false, Prose) => "encrypted under",
                (false, Listing) => "sealed with",
            };
            format!("{} {verb} {}", phrase(p, style), phrase(k, style))
        }
        (Term::Hash(x), Prose) => format!("a hash of {}", phrase(x, style)),
        (Term::Hash(x), Listing) => format!("the digest of {}", phrase(x, style)),
    }
}

fn sort_words(sort: Sort, style: Style) -> &'static str {
    match (sort, style) {
        (Sort::Name, Style::Prose) => "participant names",
        (Sort::Name, Style::Listing) => "principal names (sort name)",
        (Sort::Text, Style::Prose) => "nonces of sort text",
        (Sort::Text, Style::Listing) => "random values (sort text)",
        (Sort::Data, Style::Prose) => "data values",
        (Sort::Data, Style::Listing) => "payload data (sort data)",
        (Sort::Skey, Style::Prose) => "symmetric keys",
        (Sort::Skey, Style::Listing) => "shared keys (sort skey)",
        (Sort::Akey, Style::Prose) => "asymmetric keys",
        (Sort::Akey, Style::Listing) => "public/private key pairs (sort akey)",
        (Sort::Mesg, Style::Prose) => "opaque messages of sort mesg",
        (Sort::Mesg, Style::Listing) => "arbitrary messages (sort mesg)",
    }
}

fn declarations(vars: &crate::cpsa::Vars, style: Style) -> String {
    let groups: Vec<String> = vars
        .grouped()
        .into_iter()
        .map(|(sort, names)| {
            let names: Vec<String> = names.iter().map(|n| id(n)).collect();
            format!("{} as {}", join_and(&names), sort_words(sort, style))
        })
        .collect();
    join_and(&groups)
}

fn terms(ts: &[Term], style: Style) -> String {
    join_and(&ts.iter().map(|t| phrase(t, style)).collect::<Vec<_>>())
}

fn be(ts: &[Term]) -> &'static str {
    if ts.len() > 1 {
        "are"
    } else {
        "is"
    }
}

fn role_prose(r: &Role, out: &mut String) {
    let style = Style::Prose;
    out.push_str(&format!(
        "The {} role declares {}. ",
        id(&r.name),
        declarations(&r.vars, style)
    ));
    let steps: Vec<String> = r
        .trace
        .iter()
        .map(|ev| {
            let verb = match ev.direction {
                Direction::Send => "sends",
                Direction::Recv => "receives",
            };
            format!("{verb} {}", phrase(&ev.message, style))
        })
        .collect();
    let mut sentence = String::from("During a run it ");
    for (i, s) in steps.iter().enumerate() {
        let lead = match i {
            0 => "first ",
            _ if i + 1 == steps.len() => ", and finally ",
            _ => ", then ",
        };
        sentence.push_str(lead);
        sentence.push_str(s);
    }
    out.push_str(&sentence);
    out.push_str(". ");
    if !r.uniq_orig.is_empty() {
        out.push_str(&format!("It uniquely originates {}. ", terms(&r.uniq_orig, style)));
    }
    if !r.non_orig.is_empty() {
        out.push_str(&format!(
            "It assumes {} {} never originated. ",
            terms(&r.non_orig, style),
            be(&r.non_orig)
        ));
    }
}

fn role_listing(r: &Role, out: &mut String) {
    let style = Style::Listing;
    out.push_str(&format!(
        "Role {}\n- Declarations: {}.\n",
        id(&r.name),
        declarations(&r.vars, style)
    ));
    for (i, ev) in r.trace.iter().enumerate() {
        let verb = match ev.direction {
            Direction::Send => "Transmit",
            Direction::Recv => "Wait for",
        };
        out.push_str(&format!("- Step {}: {verb} {}.\n", i + 1, phrase(&ev.message, style)));
    }
    if !r.uniq_orig.is_empty() {
        out.push_str(&format!("- Fresh and unique: {}.\n", terms(&r.uniq_orig, style)));
    }
    if !r.non_orig.is_empty() {
        out.push_str(&format!("- Never originated: {}.\n", terms(&r.non_orig, style)));
    }
}

fn skeleton_text(s: &Skeleton, style: Style) -> String {
    let strands: Vec<String> = s
        .strands
        .iter()
        .map(|st| {
            let binds: Vec<String> = st
                .bindings
                .iter()
                .map(|(v, t)| format!("{} to {}", id(v), phrase(t, style)))
                .collect();
            let mut text = format!("a {} strand of height {}", id(&st.role), st.height);
            if !binds.is_empty() {
                text.push_str(&format!(" binding {}", join_and(&binds)));
            }
            text
        })
        .collect();
    let mut parts = Vec::new();
    if !strands.is_empty() {
        parts.push(join_and(&strands));
    }
    for l in &s.listeners {
        parts.push(format!("a listener for {}", phrase(l, style)));
    }
    let mut text = match style {
        Style::Prose => format!(
            "Add a skeleton for {} over {} containing {}.",
            id(&s.protocol),
            declarations(&s.vars, style),
            join_and(&parts)
        ),
        Style::Listing => format!(
            "- Scenario on {} with {}: {}.",
            id(&s.protocol),
            declarations(&s.vars, style),
            join_and(&parts)
        ),
    };
    if !s.non_orig.is_empty() {
        text.push_str(&format!(
            " Assume {} {} never originated.",
            terms(&s.non_orig, style),
            be(&s.non_orig)
        ));
    }
    if !s.uniq_orig.is_empty() {
        text.push_str(&format!(" Treat {} as uniquely originating.", terms(&s.uniq_orig, style)));
    }
    text
}

fn topic_of(cpsa: &str) -> &str {
    cpsa.lines()
        .find_map(|l| l.trim().strip_prefix("; topic:"))
        .map(str::trim)
        .unwrap_or("secure message exchange")
}

fn describe_unit(unit: &CpsaUnit, topic: &str, style: Style) -> String {
    let title = unit
        .herald
        .as_ref()
        .map(|h| h.title.clone())
        .unwrap_or_else(|| "protocol".into());
    let mut out = String::new();
    for p in &unit.protocols {
        let roles: Vec<String> = p.roles.iter().map(|r| id(&r.name)).collect();
        match style {
            Style::Prose => {
                out.push_str(&format!(
                    "Protocol Description: I need a CPSA definition titled \"{title}\", a protocol for {topic}. \
                     Name it {} in the {} algebra. It has {} roles: {}.\n\n",
                    id(&p.name),
                    p.algebra,
                    p.roles.len(),
                    join_and(&roles)
                ));
                for r in &p.roles {
                    role_prose(r, &mut out);
                    out.truncate(out.trim_end().len());
                    out.push_str("\n\n");
                }
            }
            Style::Listing => {
                out.push_str(&format!(
                    "Please write the protocol {} ({} algebra) with the herald \"{title}\". \
                     Its purpose is {topic}. The participants are {}.\n\n",
                    id(&p.name),
                    p.algebra,
                    join_and(&roles)
                ));
                for r in &p.roles {
                    role_listing(r, &mut out);
                    out.push('\n');
                }
            }
        }
    }
    if !unit.skeletons.is_empty() {
        if let Style::Listing = style {
            out.push_str("Analysis scenarios:\n");
        }
        let sks: Vec<String> = unit.skeletons.iter().map(|s| skeleton_text(s, style)).collect();
        out.push_str(&sks.join("\n"));
        out.push('\n');
    }
    out.trim_end().to_string()
}

/// A description of `cpsa` in one of two styles, picked by `index`.
pub fn describe(cpsa: &str, index: usize) -> String {
    let unit = analyze(cpsa).unit;
    let style = if index % 2 == 1 {
        Style::Prose
    } else {
        Style::Listing
    };
    describe_unit(&unit, topic_of(cpsa), style)
}

const LEAD_INS: [&str; 8] = [
    "Here is a protocol we would like modelled.",
    "The following exchange needs a formal definition.",
    "Our team is documenting this protocol for analysis.",
    "Below is a protocol design awaiting review.",
    "We are studying the protocol outlined next.",
    "Consider the message exchange described here.",
    "This request concerns the protocol sketched below.",
    "A designer has supplied the following outline.",
];

const SWAPS: [&[(&str, &str)]; 3] = [
    &[
        ("sends", "transmits"),
        ("receives", "accepts"),
        ("Transmit", "Emit"),
        ("Wait for", "Expect"),
    ],
    &[
        ("encrypted under", "enciphered with"),
        ("the concatenation of", "the sequence of"),
        ("sealed with", "locked with"),
        ("the digest of", "the hash value of"),
    ],
    &[
        ("uniquely originates", "freshly generates"),
        ("participant names", "principal identities"),
        ("Never originated", "Not originated by anyone"),
        ("Analysis scenarios", "Scenarios to analyze"),
    ],
];

/// Rewording number `j`: a lead-in sentence plus word swaps chosen by the
/// bits of `j`. Backticked identifiers are left as they are.
pub fn paraphrase(question: &str, j: usize) -> String {
    let m = j.saturating_sub(1) / 2;
    let mut out = String::from(LEAD_INS[m % LEAD_INS.len()]);
    out.push(' ');
    for (i, seg) in question.split('`').enumerate() {
        if i > 0 {
            out.push('`');
        }
        if i % 2 == 1 {
            out.push_str(seg);
            continue;
        }
        let mut s = seg.to_string();
        for (bit, swaps) in SWAPS.iter().enumerate() {
            if (m >> bit) & 1 == 1 {
                for (from, to) in *swaps {
                    s = s.replace(from, to);
                }
            }
        }
        out.push_str(&s);
    }
    out
}

/// Wraps a backend and keeps every exchange in an in-memory cassette.
pub struct MemoryRecorder<B> {
    inner: B,
    cassette: Mutex<Cassette>,
}

impl<B: Backend> MemoryRecorder<B> {
    pub fn new(inner: B) -> Self {
        MemoryRecorder {
            inner,
            cassette: Mutex::new(Cassette::default()),
        }
    }

    /// Entries ordered by hash, so the result does not depend on call order.
    pub fn into_sorted(self) -> Cassette {
        let c = self.cassette.into_inner().expect("recorder lock");
        let mut entries = c.entries().to_vec();
        entries.sort_by(|a, b| a.hash.cmp(&b.hash));
        let mut out = Cassette::default();
        for e in entries {
            out.upsert(e);
        }
        out
    }
}

impl<B: Backend> Backend for MemoryRecorder<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        let r = self.inner.generate(request)?;
        self.cassette.lock().expect("recorder lock").upsert(CassetteEntry {
            hash: request.hash(),
            model: request.model_id.clone(),
            temperature: request.temperature,
            response_text: r.text.clone(),
            usage: r.usage,
        });
        Ok(r)
    }
}

/// Everything `regenerate` writes, held in memory.
#[derive(Debug, Clone)]
pub struct Fixtures {
    /// Cassette name to JSON Lines text.
    pub cassettes: BTreeMap<String, String>,
    /// The split-stamped reference corpus.
    pub corpus: Vec<QAPair>,
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// The synthesize, augment and split run behind the reference corpus,
/// driven by `backend`.
pub fn reference_run(backend: &dyn Backend) -> Result<Vec<QAPair>, crate::dataset::DatasetError> {
    let seeds = builtin_seeds();
    let synth = crate::dataset::synthesize_pairs(&seeds, backend, DEFAULT_PER_SEED)?;
    let augmented = augment_variance(&synth.pairs, Some(backend), DEFAULT_VARIANTS)?;
    let (mut train, test) = split(&augmented.pairs, DEFAULT_TRAIN_FRACTION, SPLIT_SEED)?;
    train.extend(test);
    train.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    Ok(train)
}

fn translate_cassette(data: &Path) -> Cassette {
    let registry = TemplateRegistry::builtin();
    let blanchet = read(&data.join("corpus/blanchet.scm"));
    let mutual_auth = read(&data.join("corpus/mutual_auth.scm"));
    let runs = [
        ("corpus/blanchet_query.txt", vec![blanchet.clone()]),
        ("corpus/mutual_auth_query.txt", vec![mutual_auth, blanchet]),
    ];
    let mut all = Cassette::default();
    for (query, script) in runs {
        let scripted =
            ScriptedBackend::new(TRANSLATE_MODEL, script.into_iter().map(Ok).collect());
        let rec = MemoryRecorder::new(scripted);
        let deps = Deps {
            registry: &registry,
            backend: &rec,
            gold: None,
        };
        translate(&read(&data.join(query)), &PipelineConfig::default(), &deps)
            .expect("translate fixture runs");
        for e in rec.into_sorted().entries() {
            all.upsert(e.clone());
        }
    }
    all
}

fn eval_cassette(data: &Path, model: &str) -> Cassette {
    let registry = TemplateRegistry::builtin();
    let suite = load_suite(&data.join("eval/suite.json")).expect("suite loads");
    let mut c = Cassette::default();
    for entry in &suite {
        let ctx = crate::context::build_context(&entry.query_text, "default", &registry)
            .expect("context builds");
        let request = GenerationRequest::user(model, ctx.text);
        let text = read(&data.join(format!("eval/responses/{model}/{}.txt", entry.query_id)));
        c.upsert(CassetteEntry {
            hash: request.hash(),
            model: model.to_string(),
            temperature: request.temperature,
            usage: Usage {
                prompt_tokens: request.messages.iter().map(|m| rough_tokens(&m.content)).sum(),
                completion_tokens: rough_tokens(&text),
            },
            response_text: text,
        });
    }
    c
}

/// Builds every fixture from the sources in `data`.
pub fn build(data: &Path) -> Fixtures {
    let writer = MemoryRecorder::new(RuleWriter);
    let corpus = reference_run(&writer).expect("reference run succeeds");
    let mut cassettes = BTreeMap::new();
    cassettes.insert("dataset".to_string(), writer.into_sorted().to_jsonl());
    cassettes.insert("translate".to_string(), translate_cassette(data).to_jsonl());
    for model in EVAL_MODELS {
        cassettes.insert(model.to_string(), eval_cassette(data, model).to_jsonl());
    }
    Fixtures { cassettes, corpus }
}

/// Rebuilds the fixtures and writes them into `data`.
pub fn regenerate(data: &Path) -> std::io::Result<Fixtures> {
    let f = build(data);
    for (name, text) in &f.cassettes {
        fs::write(data.join(format!("cassettes/{name}.jsonl")), text)?;
    }
    crate::dataset::save_corpus(&data.join("reference_corpus"), &f.corpus)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(f)
}
