//! Automated scoring of generated definitions and comparison reports.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::candidate::{best_candidate, Candidate};
use crate::cpsa::{format_unit, Operator};
use crate::sexpr::parse;

pub use report::{
    load_suite, parse_suite, render_csv, render_markdown, run_eval, EvalError, EvalReport, ReportRow, SuiteEntry,
    CSV_HEADER,
};

/// Similarity to the canonical formatting needed to pass the layout check.
pub const LAYOUT_SIMILARITY: f64 = 0.8;
pub const MAX_LINE_CHARS: usize = 100;

/// What a good answer to one query must contain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldChecklist {
    #[serde(default)]
    pub query_id: String,
    pub expected_role_count: usize,
    pub expected_variables: BTreeSet<String>,
    /// Role index (in declaration order) to trace length.
    pub expected_event_counts: BTreeMap<usize, usize>,
    pub required_operators: BTreeSet<Operator>,
}

impl GoldChecklist {
    pub fn check(&self) -> Result<(), String> {
        if self.expected_role_count == 0 {
            return Err(format!("{}: expected_role_count must be at least 1", self.query_id));
        }
        if let Some(k) = self
            .expected_event_counts
            .keys()
            .find(|&&k| k >= self.expected_role_count)
        {
            return Err(format!("{}: role index {k} out of range", self.query_id));
        }
        Ok(())
    }

    pub fn item_count(&self) -> usize {
        1 + self.expected_variables.len()
            + self.expected_event_counts.len()
            + self.required_operators.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub correctness: f64,
    pub clarity: f64,
    pub completeness: f64,
}

fn correctness_of(c: Option<&Candidate>) -> f64 {
    match c {
        Some(c) if c.has_protocol() => 1.0 / (1.0 + c.error_count() as f64),
        _ => 0.0,
    }
}

fn clarity_of(c: Option<&Candidate>) -> f64 {
    let Some(c) = c else { return 0.0 };
    if parse(&c.text).forms.is_empty() {
        return 0.0;
    }
    let unit = &c.analysis.unit;
    let has_herald = unit.herald.is_some();
    let good_name = |s: &str| s.chars().next().is_some_and(char::is_alphabetic);
    let names_ok = unit
        .protocols
        .iter()
        .all(|p| good_name(&p.name) && p.roles.iter().all(|r| good_name(&r.name)));
    let canonical = format_unit(unit);
    let layout_ok = strsim::normalized_levenshtein(&c.text, &canonical) >= LAYOUT_SIMILARITY;
    let short_lines = c.text.lines().all(|l| l.chars().count() <= MAX_LINE_CHARS);
    let passed = [has_herald, names_ok, layout_ok, short_lines]
        .iter()
        .filter(|&&b| b)
        .count();
    passed as f64 / 4.0
}

fn completeness_of(c: Option<&Candidate>, gold: &GoldChecklist) -> f64 {
    let Some(c) = c else { return 0.0 };
    if parse(&c.text).forms.is_empty() {
        return 0.0;
    }
    let unit = &c.analysis.unit;
    let roles: Vec<_> = unit.roles().collect();
    let mut hit = usize::from(roles.len() == gold.expected_role_count);
    hit += gold
        .expected_variables
        .iter()
        .filter(|v| unit.declares(v))
        .count();
    hit += gold
        .expected_event_counts
        .iter()
        .filter(|(&i, &n)| roles.get(i).is_some_and(|r| r.trace.len() == n))
        .count();
    let ops = unit.operators();
    hit += gold
        .required_operators
        .iter()
        .filter(|o| ops.contains(o))
        .count();
    hit as f64 / gold.item_count() as f64
}

/// `1/(1+E)` over the best candidate, where E counts reader, lowering and
/// validation errors. Zero when no protocol can be recovered.
pub fn score_correctness(output: &str) -> f64 {
    correctness_of(best_candidate(output).as_ref())
}

/// Mean of four checks: a herald, well-formed protocol and role names,
/// closeness to canonical layout, and no overlong lines.
pub fn score_clarity(output: &str) -> f64 {
    clarity_of(best_candidate(output).as_ref())
}

/// Fraction of checklist items the output covers.
pub fn score_completeness(output: &str, gold: &GoldChecklist) -> f64 {
    completeness_of(best_candidate(output).as_ref(), gold)
}

/// All three scores, sharing one candidate analysis.
pub fn score_all(output: &str, gold: &GoldChecklist) -> (ScoreCard, Option<Candidate>) {
    let c = best_candidate(output);
    let card = ScoreCard {
        correctness: correctness_of(c.as_ref()),
        clarity: clarity_of(c.as_ref()),
        completeness: completeness_of(c.as_ref(), gold),
    };
    (card, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gold() -> GoldChecklist {
        GoldChecklist {
            query_id: "q".into(),
            expected_role_count: 1,
            expected_variables: ["x".to_string()].into(),
            expected_event_counts: [(0, 1)].into(),
            required_operators: [Operator::Enc].into(),
        }
    }

    #[test]
    fn empty_and_prose_score_zero() {
        for text in ["", "just words", "(((", ")"] {
            assert_eq!(score_correctness(text), 0.0, "{text:?}");
            assert_eq!(score_completeness(text, &gold()), 0.0, "{text:?}");
        }
        assert_eq!(score_clarity(""), 0.0);
        assert_eq!(score_clarity("plain prose"), 0.0);
    }

    #[test]
    fn errors_lower_correctness() {
        let ok = "(defprotocol p basic (defrole r (vars (x text) (k skey)) (trace (send (enc x k)))))";
        assert_eq!(score_correctness(ok), 1.0);
        let one = "(defprotocol p basic (defrole r (vars (k skey)) (trace (send (enc x k)))))";
        assert_eq!(score_correctness(one), 0.5);
    }

    #[test]
    fn checklist_validation() {
        let mut g = gold();
        assert!(g.check().is_ok());
        g.expected_event_counts.insert(3, 1);
        assert!(g.check().is_err());
        g.expected_role_count = 0;
        assert!(g.check().is_err());
        assert_eq!(gold().item_count(), 4);
    }

    #[test]
    fn checklist_json_shape() {
        let g: GoldChecklist = serde_json::from_str(
            r#"{"expected_role_count":2,"expected_variables":["a"],"expected_event_counts":{"0":3},"required_operators":["enc","pubk"]}"#,
        )
        .unwrap();
        assert_eq!(g.expected_event_counts[&0], 3);
        assert!(g.required_operators.contains(&Operator::PubKeyOf));
    }
}
