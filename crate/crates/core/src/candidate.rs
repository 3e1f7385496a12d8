//! Picking the CPSA definition out of free-form model output.

use crate::cpsa::{analyze, Analysis};
use crate::diag::{sort_diagnostics, Code, Diagnostic, SourceSpan};
use crate::sexpr::{extract_blocks, BlockOrigin};

#[derive(Debug, Clone)]
pub struct Candidate {
    pub text: String,
    pub analysis: Analysis,
    /// How many candidates the output held in total.
    pub alternatives: usize,
}

impl Candidate {
    pub fn has_protocol(&self) -> bool {
        !self.analysis.unit.protocols.is_empty()
    }

    pub fn error_count(&self) -> usize {
        self.analysis.error_count()
    }
}

/// Splits output into texts worth analyzing. Each fenced block counts on
/// its own. Text that is already bare s-expressions is taken whole so that
/// unbalanced input still reports where it went wrong. Otherwise the
/// balanced regions found in prose are joined into one candidate.
pub fn candidate_texts(output: &str) -> Vec<String> {
    let blocks = extract_blocks(output);
    if blocks.first().is_some_and(|b| b.origin == BlockOrigin::Fenced) {
        return blocks.into_iter().map(|b| b.text).collect();
    }
    let trimmed = output.trim_start();
    if trimmed.starts_with('(') || trimmed.starts_with(';') {
        return vec![output.to_string()];
    }
    if blocks.is_empty() {
        return Vec::new();
    }
    vec![blocks
        .into_iter()
        .map(|b| b.text)
        .collect::<Vec<_>>()
        .join("\n\n")]
}

/// Analyzes a candidate text. A text without any protocol gets an extra
/// E-NO-PROTOCOL error.
pub fn analyze_candidate(text: &str) -> Analysis {
    let mut a = analyze(text);
    if a.unit.protocols.is_empty() {
        let end = text.len();
        let line = text.matches('\n').count() + 1;
        let column = text.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        a.diagnostics.push(Diagnostic::new(
            Code::NoProtocol,
            SourceSpan::new(end, end, line, column),
            "no defprotocol form found",
        ));
        sort_diagnostics(&mut a.diagnostics);
    }
    a
}

/// The candidate with a protocol and the fewest errors; earliest wins ties.
pub fn best_candidate(output: &str) -> Option<Candidate> {
    let texts = candidate_texts(output);
    let n = texts.len();
    texts
        .into_iter()
        .map(|text| {
            let analysis = analyze_candidate(&text);
            Candidate { text, analysis, alternatives: n }
        })
        .enumerate()
        .min_by_key(|(i, c)| (!c.has_protocol(), c.error_count(), *i))
        .map(|(_, c)| c)
}
