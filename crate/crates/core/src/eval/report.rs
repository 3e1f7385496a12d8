use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{score_all, GoldChecklist, ScoreCard};
use crate::context::{build_context, sha256_hex, ContextError, TemplateRegistry};
use crate::diag::Tally;
use crate::gateway::{Backend, GenerationRequest};

pub const CSV_HEADER: &str = "query_id,model_id,correctness,clarity,completeness";

/// One query of an evaluation suite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub query_id: String,
    pub query_text: String,
    pub checklist: GoldChecklist,
    /// A handwritten definition that satisfies the checklist.
    #[serde(default)]
    pub reference: String,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{0}")]
    Suite(String),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("two backends report model `{0}`")]
    DuplicateModel(String),
}

/// Reads a JSON array of suite entries and checks each checklist.
pub fn load_suite(path: &Path) -> Result<Vec<SuiteEntry>, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::Suite(format!("{}: {e}", path.display())))?;
    parse_suite(&text, &path.display().to_string())
}

/// Like `load_suite` for text already in memory; `origin` names it in errors.
pub fn parse_suite(text: &str, origin: &str) -> Result<Vec<SuiteEntry>, EvalError> {
    let mut suite: Vec<SuiteEntry> =
        serde_json::from_str(text).map_err(|e| EvalError::Suite(format!("{origin}: {e}")))?;
    if suite.is_empty() {
        return Err(EvalError::Suite(format!("{origin}: empty suite")));
    }
    for e in &mut suite {
        e.checklist.query_id = e.query_id.clone();
        e.checklist.check().map_err(EvalError::Suite)?;
    }
    Ok(suite)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub query_id: String,
    pub model_id: String,
    pub scores: ScoreCard,
    pub diagnostics_summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub generated_at: String,
    pub config_digest: String,
}

fn eval_row(entry: &SuiteEntry, backend: &dyn Backend, registry: &TemplateRegistry, template_id: &str) -> ReportRow {
    let row = |scores, summary: String| ReportRow {
        query_id: entry.query_id.clone(),
        model_id: backend.model_id().to_string(),
        scores,
        diagnostics_summary: summary,
    };
    let ctx = match build_context(&entry.query_text, template_id, registry) {
        Ok(c) => c,
        Err(e) => return row(ScoreCard::default(), format!("error: {e}")),
    };
    let request = GenerationRequest::user(backend.model_id(), ctx.text);
    match backend.generate(&request) {
        Err(e) => row(ScoreCard::default(), format!("error: {e}")),
        Ok(result) => {
            let (card, cand) = score_all(&result.text, &entry.checklist);
            let summary = match cand {
                None => "no s-expressions found".to_string(),
                Some(c) if c.alternatives > 1 => format!(
                    "{}; best of {} candidates",
                    Tally::of(&c.analysis.diagnostics),
                    c.alternatives
                ),
                Some(c) => Tally::of(&c.analysis.diagnostics).to_string(),
            };
            row(card, summary)
        }
    }
}

/// Scores every (query, backend) cell. Rows come back ordered by query id
/// then model id whatever order they finish in. A failing backend yields
/// zero scores and an error note for its rows.
pub fn run_eval(
    suite: &[SuiteEntry],
    backends: &[&dyn Backend],
    registry: &TemplateRegistry,
    template_id: &str,
) -> Result<EvalReport, EvalError> {
    if suite.is_empty() {
        return Err(EvalError::Suite("empty suite".into()));
    }
    let template = registry
        .get(template_id)
        .ok_or_else(|| ContextError::UnknownTemplate(template_id.to_string()))?;
    let mut models: Vec<&str> = backends.iter().map(|b| b.model_id()).collect();
    models.sort_unstable();
    if let Some(w) = models.windows(2).find(|w| w[0] == w[1]) {
        return Err(EvalError::DuplicateModel(w[0].to_string()));
    }

    let cells: Vec<(&SuiteEntry, &dyn Backend)> = suite
        .iter()
        .flat_map(|e| backends.iter().map(move |&b| (e, b)))
        .collect();
    let mut rows: Vec<ReportRow> = cells
        .par_iter()
        .map(|&(e, b)| eval_row(e, b, registry, template_id))
        .collect();
    rows.sort_by(|a, b| (&a.query_id, &a.model_id).cmp(&(&b.query_id, &b.model_id)));

    let digest_input = serde_json::json!({
        "template": template.body,
        "suite": suite,
        "backends": backends.iter().map(|b| b.id()).collect::<Vec<_>>(),
    });
    Ok(EvalReport {
        rows,
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        config_digest: sha256_hex(digest_input.to_string().as_bytes()),
    })
}

/// CSV with scores to two decimals. Contains no timestamp, so identical
/// inputs give identical bytes.
pub fn render_csv(report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
    for r in &report.rows {
        w.write_record([
            r.query_id.as_str(),
            r.model_id.as_str(),
            &format!("{:.2}", r.scores.correctness),
            &format!("{:.2}", r.scores.clarity),
            &format!("{:.2}", r.scores.completeness),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 fields")
}

/// An aligned markdown table of queries by models, followed by notes for
/// rows with findings. The timestamp is left out so reruns are identical.
pub fn render_markdown(report: &EvalReport) -> String {
    let header = ["Query", "Model", "Correctness", "Clarity", "Completeness"];
    let body: Vec<[String; 5]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.query_id.clone(),
                r.model_id.clone(),
                format!("{:.2}", r.scores.correctness),
                format!("{:.2}", r.scores.clarity),
                format!("{:.2}", r.scores.completeness),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                if i < 2 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        format!("| {} |\n", parts.join(" | "))
    };
    let mut out = String::from("# Evaluation report\n\n");
    out.push_str(&format!("Config digest: `{}`\n\n", report.config_digest));
    out.push_str(&line(header.to_vec()));
    let rule: Vec<String> = widths
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            if i < 2 {
                "-".repeat(w)
            } else {
                format!("{}:", "-".repeat(w - 1))
            }
        })
        .collect();
    out.push_str(&line(rule.iter().map(String::as_str).collect()));
    for row in &body {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    let notes: Vec<&ReportRow> = report
        .rows
        .iter()
        .filter(|r| r.diagnostics_summary != "0 errors, 0 warnings, 0 lints")
        .collect();
    if !notes.is_empty() {
        out.push_str("\n## Notes\n\n");
        for r in notes {
            out.push_str(&format!("- {} / {}: {}\n", r.query_id, r.model_id, r.diagnostics_summary));
        }
    }
    out
}
