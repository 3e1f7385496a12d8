//! Python module `protoforge`.
//!
//! Backends are given either as an id string (`builtin:translate`,
//! `replay:path.jsonl`, `live:model`) or as a Python callable that takes the
//! chat messages as a list of `{"role", "content"}` dicts and returns the
//! completion text.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use protoforge_core::context::TemplateRegistry;
use protoforge_core::cpsa::{self, format_unit};
use protoforge_core::dataset::{self, FINETUNE_SYSTEM_PROMPT};
use protoforge_core::diag::{self, Code};
use protoforge_core::eval::{self, parse_suite, GoldChecklist, SuiteEntry};
use protoforge_core::gateway::{
    Backend, FinishReason, GatewayError, GenerationRequest, GenerationResult, Usage,
};
use protoforge_core::pipeline::{self, open_backend, Deps, PipelineConfig, Settings};
use protoforge_core::sexpr;

const SHIPPED_SUITE: &str = include_str!("../../core/data/eval/suite.json");

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "protoforge")]
#[derive(Clone)]
pub struct Diagnostic {
    code: String,
    severity: String,
    message: String,
    line: usize,
    column: usize,
    start_byte: usize,
    end_byte: usize,
}

#[pymethods]
impl Diagnostic {
    fn __repr__(&self) -> String {
        format!("<Diagnostic {} {}:{} {}>", self.code, self.line, self.column, self.message)
    }
}

impl From<&diag::Diagnostic> for Diagnostic {
    fn from(d: &diag::Diagnostic) -> Self {
        Diagnostic {
            code: d.code.as_str().into(),
            severity: d.severity.as_str().into(),
            message: d.message.clone(),
            line: d.span.line,
            column: d.span.column,
            start_byte: d.span.start_byte,
            end_byte: d.span.end_byte,
        }
    }
}

fn convert(diags: &[diag::Diagnostic]) -> Vec<Diagnostic> {
    diags.iter().map(Diagnostic::from).collect()
}

/// Result of reading, lowering, validating and linting one text.
#[pyclass(frozen, module = "protoforge")]
pub struct Analysis(cpsa::Analysis);

#[pymethods]
impl Analysis {
    #[getter]
    fn diagnostics(&self) -> Vec<Diagnostic> {
        convert(&self.0.diagnostics)
    }

    #[getter]
    fn error_count(&self) -> usize {
        self.0.error_count()
    }

    #[getter]
    fn protocols(&self) -> Vec<String> {
        self.0.unit.protocols.iter().map(|p| p.name.clone()).collect()
    }

    /// Role names of each protocol, in order.
    #[getter]
    fn roles(&self) -> Vec<Vec<String>> {
        self.0
            .unit
            .protocols
            .iter()
            .map(|p| p.roles.iter().map(|r| r.name.clone()).collect())
            .collect()
    }

    #[getter]
    fn skeleton_count(&self) -> usize {
        self.0.unit.skeletons.len()
    }

    /// Canonical text of whatever lowered.
    fn format(&self) -> String {
        format_unit(&self.0.unit)
    }

    fn __repr__(&self) -> String {
        format!(
            "<Analysis protocols={:?} skeletons={} errors={}>",
            self.protocols(),
            self.skeleton_count(),
            self.error_count()
        )
    }
}

#[pyfunction]
fn analyze(text: &str) -> Analysis {
    Analysis(cpsa::analyze(text))
}

/// Reader diagnostics only.
#[pyfunction]
fn parse_diagnostics(text: &str) -> Vec<Diagnostic> {
    convert(&sexpr::parse(text).diagnostics)
}

/// Canonical layout of a definition. Raises ValueError when it does not parse.
#[pyfunction]
fn format(text: &str) -> PyResult<String> {
    let parsed = sexpr::parse(text);
    if let Some(d) = parsed.diagnostics.iter().find(|d| d.is_error()) {
        return Err(value_err(d));
    }
    Ok(format_unit(&cpsa::analyze(text).unit))
}

/// (code, severity, description) for every diagnostic code.
#[pyfunction]
fn diagnostic_codes() -> Vec<(&'static str, &'static str, &'static str)> {
    Code::ALL
        .iter()
        .map(|c| (c.as_str(), c.severity().as_str(), c.description()))
        .collect()
}

#[pyclass(frozen, module = "protoforge")]
pub struct Checklist(GoldChecklist);

#[pymethods]
impl Checklist {
    /// Builds a checklist from its JSON form.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let gold: GoldChecklist = serde_json::from_str(text).map_err(value_err)?;
        gold.check().map_err(value_err)?;
        Ok(Checklist(gold))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("serializable")
    }

    #[getter]
    fn query_id(&self) -> String {
        self.0.query_id.clone()
    }
}

#[pyclass(frozen, get_all, module = "protoforge")]
pub struct SuiteQuery {
    query_id: String,
    query_text: String,
    reference: String,
    checklist: Py<Checklist>,
}

/// The three shipped evaluation queries.
#[pyfunction]
fn shipped_suite(py: Python<'_>) -> PyResult<Vec<SuiteQuery>> {
    let suite = parse_suite(SHIPPED_SUITE, "shipped suite").map_err(value_err)?;
    suite
        .into_iter()
        .map(|e: SuiteEntry| {
            Ok(SuiteQuery {
                query_id: e.query_id,
                query_text: e.query_text,
                reference: e.reference,
                checklist: Py::new(py, Checklist(e.checklist))?,
            })
        })
        .collect()
}

/// (correctness, clarity, completeness) of a model output, each in [0, 1].
#[pyfunction]
fn score(output: &str, checklist: &Checklist) -> (f64, f64, f64) {
    let (card, _) = eval::score_all(output, &checklist.0);
    (card.correctness, card.clarity, card.completeness)
}

/// A Python callable used as a generation backend.
struct PyBackend {
    id: String,
    model: String,
    callable: Py<PyAny>,
}

impl Backend for PyBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_id(&self) -> &str {
        &self.model
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        Python::attach(|py| {
            let messages = request
                .messages
                .iter()
                .map(|m| {
                    let d = PyDict::new(py);
                    let role = serde_json::to_value(m.role).expect("serializable");
                    d.set_item("role", role.as_str().unwrap_or_default())?;
                    d.set_item("content", &m.content)?;
                    Ok(d)
                })
                .collect::<PyResult<Vec<_>>>()
                .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
            let text: String = self
                .callable
                .call1(py, (messages,))
                .and_then(|r| r.extract(py))
                .map_err(|e| GatewayError::Network(format!("python backend: {e}")))?;
            Ok(GenerationResult {
                text,
                finish_reason: FinishReason::Stop,
                usage: Usage::default(),
                latency_ms: 0,
            })
        })
    }
}

fn backend(spec: &Bound<'_, PyAny>, model: &str) -> PyResult<Box<dyn Backend>> {
    if let Ok(id) = spec.extract::<String>() {
        let mut settings = Settings::default();
        settings.apply_env(std::env::vars()).map_err(value_err)?;
        return open_backend(&id, &settings).map_err(value_err);
    }
    if spec.is_callable() {
        return Ok(Box::new(PyBackend {
            id: format!("python:{model}"),
            model: model.to_string(),
            callable: spec.clone().unbind(),
        }));
    }
    Err(value_err("backend must be an id string or a callable"))
}

#[pyclass(frozen, get_all, module = "protoforge")]
pub struct Translation {
    final_text: String,
    status: String,
    failure: Option<String>,
    /// Error count per attempt; None where the backend failed.
    attempt_errors: Vec<Option<usize>>,
    diagnostics: Vec<Diagnostic>,
    scores: Option<(f64, f64, f64)>,
}

#[pymethods]
impl Translation {
    fn __repr__(&self) -> String {
        format!("<Translation status={} attempts={}>", self.status, self.attempt_errors.len())
    }
}

/// Runs the generate, validate and repair loop on one query.
#[pyfunction]
#[pyo3(signature = (query, backend_spec, attempts = 3, template = "default", model = "python", checklist = None))]
fn translate(
    py: Python<'_>,
    query: &str,
    backend_spec: &Bound<'_, PyAny>,
    attempts: u32,
    template: &str,
    model: &str,
    checklist: Option<&Checklist>,
) -> PyResult<Translation> {
    let backend = backend(backend_spec, model)?;
    let config = PipelineConfig {
        max_attempts: attempts,
        template_id: template.to_string(),
        ..PipelineConfig::default()
    };
    let registry = TemplateRegistry::builtin();
    let gold = checklist.map(|c| &c.0);
    let r = py
        .detach(|| {
            let deps = Deps {
                registry: &registry,
                backend: backend.as_ref(),
                gold,
            };
            pipeline::translate(query, &config, &deps)
        })
        .map_err(value_err)?;
    Ok(Translation {
        final_text: r.final_text,
        status: r.status.as_str().into(),
        failure: r.failure.map(|f| f.to_string()),
        attempt_errors: r.attempts.iter().map(|a| a.error_count).collect(),
        diagnostics: convert(&r.diagnostics),
        scores: r.scorecard.map(|c| (c.correctness, c.clarity, c.completeness)),
    })
}

#[pyclass(frozen, from_py_object, module = "protoforge")]
#[derive(Clone)]
pub struct QAPair(dataset::QAPair);

#[pymethods]
impl QAPair {
    #[getter]
    fn pair_id(&self) -> &str {
        &self.0.pair_id
    }

    #[getter]
    fn question(&self) -> &str {
        &self.0.question
    }

    #[getter]
    fn answer(&self) -> &str {
        &self.0.answer
    }

    #[getter]
    fn seed_id(&self) -> &str {
        &self.0.provenance.seed_id
    }

    /// "train", "test" or None.
    #[getter]
    fn split(&self) -> Option<String> {
        self.0.split.map(|s| serde_json::to_value(s).expect("serializable").as_str().unwrap_or_default().to_string())
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("serializable")
    }

    fn __repr__(&self) -> String {
        format!("<QAPair {}>", self.0.pair_id)
    }
}

fn unwrap_pairs(pairs: Vec<QAPair>) -> Vec<dataset::QAPair> {
    pairs.into_iter().map(|p| p.0).collect()
}

fn wrap(o: dataset::Outcome) -> Vec<QAPair> {
    o.pairs.into_iter().map(QAPair).collect()
}

/// Back-translates the shipped seed definitions (or those under `seeds_dir`).
#[pyfunction]
#[pyo3(signature = (backend_spec, per_seed = dataset::DEFAULT_PER_SEED, seeds_dir = None))]
fn synthesize(
    py: Python<'_>,
    backend_spec: &Bound<'_, PyAny>,
    per_seed: usize,
    seeds_dir: Option<PathBuf>,
) -> PyResult<Vec<QAPair>> {
    let seeds = match seeds_dir {
        Some(d) => dataset::load_seeds(&d).map_err(value_err)?,
        None => dataset::builtin_seeds(),
    };
    let b = backend(backend_spec, "python")?;
    let o = py
        .detach(|| dataset::synthesize_pairs(&seeds, b.as_ref(), per_seed))
        .map_err(value_err)?;
    Ok(wrap(o))
}

/// Adds `variants` paraphrased or renamed copies of every pair. Without a
/// backend only renaming is used.
#[pyfunction]
#[pyo3(signature = (pairs, backend_spec = None, variants = dataset::DEFAULT_VARIANTS))]
fn augment(
    py: Python<'_>,
    pairs: Vec<QAPair>,
    backend_spec: Option<&Bound<'_, PyAny>>,
    variants: usize,
) -> PyResult<Vec<QAPair>> {
    let b = backend_spec.map(|s| backend(s, "python")).transpose()?;
    let pairs = unwrap_pairs(pairs);
    let o = py
        .detach(|| dataset::augment_variance(&pairs, b.as_deref(), variants))
        .map_err(value_err)?;
    Ok(wrap(o))
}

/// Group-wise split; returns (train, test).
#[pyfunction]
#[pyo3(signature = (pairs, train_fraction = dataset::DEFAULT_TRAIN_FRACTION, seed = 0))]
fn split(pairs: Vec<QAPair>, train_fraction: f64, seed: u64) -> PyResult<(Vec<QAPair>, Vec<QAPair>)> {
    let (train, test) = dataset::split(&unwrap_pairs(pairs), train_fraction, seed).map_err(value_err)?;
    Ok((
        train.into_iter().map(QAPair).collect(),
        test.into_iter().map(QAPair).collect(),
    ))
}

/// Writes chat-format JSON Lines and returns the export report as a dict.
#[pyfunction]
#[pyo3(signature = (pairs, path, epochs = dataset::DEFAULT_EPOCHS, system_prompt = None))]
fn export_jsonl<'py>(
    py: Python<'py>,
    pairs: Vec<QAPair>,
    path: PathBuf,
    epochs: u32,
    system_prompt: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let prompt = system_prompt.unwrap_or(FINETUNE_SYSTEM_PROMPT.trim_end());
    let r = dataset::export_jsonl(&unwrap_pairs(pairs), prompt, &path, epochs).map_err(|e| match e {
        dataset::DatasetError::Io(..) => PyOSError::new_err(e.to_string()),
        other => value_err(other),
    })?;
    let d = PyDict::new(py);
    d.set_item("pair_count", r.pair_count)?;
    d.set_item("train_count", r.train_count)?;
    d.set_item("test_count", r.test_count)?;
    d.set_item("estimated_tokens", r.estimated_tokens)?;
    d.set_item("epochs", r.epochs)?;
    d.set_item("estimated_training_tokens", r.estimated_training_tokens)?;
    Ok(d)
}

/// Scores backend ids against the shipped suite; returns CSV or markdown.
#[pyfunction]
#[pyo3(signature = (backend_ids, csv = true))]
fn eval_run(py: Python<'_>, backend_ids: Vec<String>, csv: bool) -> PyResult<String> {
    let suite = parse_suite(SHIPPED_SUITE, "shipped suite").map_err(value_err)?;
    let settings = Settings::default();
    let owned = backend_ids
        .iter()
        .map(|id| open_backend(id, &settings))
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    let registry = TemplateRegistry::builtin();
    let report = py
        .detach(|| {
            let refs: Vec<&dyn Backend> = owned.iter().map(|b| b.as_ref()).collect();
            eval::run_eval(&suite, &refs, &registry, "default")
        })
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(if csv {
        eval::render_csv(&report)
    } else {
        eval::render_markdown(&report)
    })
}

#[pymodule]
fn protoforge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Diagnostic>()?;
    m.add_class::<Analysis>()?;
    m.add_class::<Checklist>()?;
    m.add_class::<SuiteQuery>()?;
    m.add_class::<Translation>()?;
    m.add_class::<QAPair>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(parse_diagnostics, m)?)?;
    m.add_function(wrap_pyfunction!(format, m)?)?;
    m.add_function(wrap_pyfunction!(diagnostic_codes, m)?)?;
    m.add_function(wrap_pyfunction!(shipped_suite, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(translate, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(augment, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(export_jsonl, m)?)?;
    m.add_function(wrap_pyfunction!(eval_run, m)?)?;
    Ok(())
}
