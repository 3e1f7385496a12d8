use std::collections::{BTreeSet, HashSet};

use rayon::prelude::*;
use regex::{Captures, Regex};

use super::{DatasetError, Generation, Provenance, QAPair, SeedTemplate, VarianceMethod};
use crate::cpsa::{analyze, format_unit, rename_unit, CpsaUnit, Renaming, RESERVED_WORDS};
use crate::gateway::{Backend, GenerationRequest};

/// A candidate pair that was not admitted, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub pair_id: String,
    pub seed_id: String,
    pub reason: String,
}

/// Admitted pairs plus the candidates that were dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    pub pairs: Vec<QAPair>,
    pub rejected: Vec<Rejection>,
}

pub fn synthesis_prompt(cpsa_text: &str, index: usize, total: usize) -> String {
    format!(
        "Write a natural-language specification of the security protocol defined below, \
         phrased as a request a protocol designer would send to an analyst. Describe each \
         participant and every message in order, and write each identifier in backticks \
         exactly as it appears in the definition. This is description {index} of {total}; \
         word it differently from the others.\n\n```\n{}\n```\n",
        cpsa_text.trim_end()
    )
}

pub fn paraphrase_prompt(question: &str, variant: usize) -> String {
    format!(
        "Rewrite the protocol specification below in different words. Keep its meaning and \
         keep every identifier written in backticks or parentheses unchanged. This is \
         rewrite {variant}.\n\n---\n{question}\n"
    )
}

/// Lowercase, punctuation removed, whitespace runs collapsed.
pub fn normalize_question(text: &str) -> String {
    let stripped: String = text
        .chars()
        .filter(|c| !c.is_ascii_punctuation() && !is_unicode_punctuation(*c))
        .flat_map(char::to_lowercase)
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_unicode_punctuation(c: char) -> bool {
    matches!(c, '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{00A1}' | '\u{00A7}' | '\u{00AB}' | '\u{00B6}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}')
}

pub fn is_near_duplicate(a: &str, b: &str) -> bool {
    normalize_question(a) == normalize_question(b)
}

/// Admits pairs in order, dropping empty questions and questions that
/// duplicate an earlier one from the same seed.
fn admit(candidates: Vec<QAPair>, out: &mut Outcome) {
    let mut seen: HashSet<(String, String)> = out
        .pairs
        .iter()
        .map(|p| (p.provenance.seed_id.clone(), normalize_question(&p.question)))
        .collect();
    for c in candidates {
        let reject = |reason: &str| Rejection {
            pair_id: c.pair_id.clone(),
            seed_id: c.provenance.seed_id.clone(),
            reason: reason.to_string(),
        };
        let key = (c.provenance.seed_id.clone(), normalize_question(&c.question));
        let why = if key.1.is_empty() {
            Some(reject("empty question"))
        } else if seen.contains(&key) {
            Some(reject("near-duplicate question"))
        } else if analyze(&c.answer).error_count() > 0 {
            Some(reject("answer does not validate"))
        } else {
            None
        };
        match why {
            Some(r) => {
                tracing::info!(pair = %r.pair_id, reason = %r.reason, "candidate dropped");
                out.rejected.push(r);
            }
            None => {
                seen.insert(key);
                out.pairs.push(c);
            }
        }
    }
}

/// Asks `backend` for `per_seed` descriptions of each seed and pairs each
/// description with the seed's definition. Seeds are processed in
/// parallel; output follows seed order.
pub fn synthesize_pairs(
    seeds: &[SeedTemplate],
    backend: &dyn Backend,
    per_seed: usize,
) -> Result<Outcome, DatasetError> {
    if per_seed == 0 {
        return Ok(Outcome::default());
    }
    let per_seed_results: Vec<Result<Outcome, DatasetError>> = seeds
        .par_iter()
        .map(|seed| {
            let mut candidates = Vec::with_capacity(per_seed);
            for i in 1..=per_seed {
                let prompt = synthesis_prompt(&seed.cpsa_text, i, per_seed);
                let request = GenerationRequest::user(backend.model_id(), prompt);
                let text = backend.generate(&request)?.text;
                candidates.push(QAPair {
                    pair_id: format!("{}-s{i}", seed.seed_id),
                    question: text.trim().to_string(),
                    answer: seed.cpsa_text.clone(),
                    provenance: Provenance {
                        seed_id: seed.seed_id.clone(),
                        generation: Generation::BackTranslated,
                    },
                    split: None,
                });
            }
            let mut out = Outcome::default();
            admit(candidates, &mut out);
            if out.pairs.is_empty() {
                return Err(DatasetError::AllCandidatesRejected(seed.seed_id.clone()));
            }
            Ok(out)
        })
        .collect();
    let mut all = Outcome::default();
    for r in per_seed_results {
        let r = r?;
        all.pairs.extend(r.pairs);
        all.rejected.extend(r.rejected);
    }
    Ok(all)
}

fn identifiers(unit: &CpsaUnit) -> BTreeSet<String> {
    let mut ids = BTreeSet::new();
    for r in unit.roles() {
        ids.insert(r.name.clone());
        ids.extend(r.vars.iter().map(|d| d.name.clone()));
    }
    for s in &unit.skeletons {
        ids.extend(s.vars.iter().map(|d| d.name.clone()));
    }
    ids
}

/// Maps every role and variable name `x` to `x-{j}`, extending the suffix
/// until the new name collides with nothing else in the unit.
pub fn variant_renaming(unit: &CpsaUnit, j: usize) -> Renaming {
    let ids = identifiers(unit);
    let mut taken: HashSet<String> = ids.iter().cloned().collect();
    taken.extend(unit.protocols.iter().map(|p| p.name.clone()));
    taken.extend(RESERVED_WORDS.iter().map(|w| w.to_string()));
    let mut map = Renaming::new();
    for id in &ids {
        let mut new = format!("{id}-{j}");
        while taken.contains(&new) {
            new.push_str(&format!("-{j}"));
        }
        taken.insert(new.clone());
        map.insert(id.clone(), new);
    }
    map
}

fn ident_pattern() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(([^()\s`]+)\)|`([^`\s]+)`").expect("valid pattern"))
}

/// Applies `map` to identifiers written as `(x)` or `` `x` `` in prose.
pub fn rename_question(question: &str, map: &Renaming) -> String {
    ident_pattern()
        .replace_all(question, |c: &Captures| {
            let (m, open, close) = match (c.get(1), c.get(2)) {
                (Some(m), _) => (m, "(", ")"),
                (None, Some(m)) => (m, "`", "`"),
                _ => unreachable!("one group always matches"),
            };
            match map.get(m.as_str()) {
                Some(new) => format!("{open}{new}{close}"),
                None => c[0].to_string(),
            }
        })
        .into_owned()
}

fn variant(
    parent: &QAPair,
    j: usize,
    backend: Option<&dyn Backend>,
) -> Result<QAPair, DatasetError> {
    let provenance = |method| Provenance {
        seed_id: parent.provenance.seed_id.clone(),
        generation: Generation::Variance {
            parent_id: parent.pair_id.clone(),
            method,
        },
    };
    let pair_id = format!("{}-v{j}", parent.pair_id);
    match backend {
        Some(b) if j % 2 == 1 => {
            let request = GenerationRequest::user(b.model_id(), paraphrase_prompt(&parent.question, j));
            Ok(QAPair {
                pair_id,
                question: b.generate(&request)?.text.trim().to_string(),
                answer: parent.answer.clone(),
                provenance: provenance(VarianceMethod::Paraphrase),
                split: None,
            })
        }
        _ => {
            let unit = analyze(&parent.answer).unit;
            let map = variant_renaming(&unit, j);
            Ok(QAPair {
                pair_id,
                question: rename_question(&parent.question, &map),
                answer: format_unit(&rename_unit(&unit, &map)),
                provenance: provenance(VarianceMethod::Rename),
                split: None,
            })
        }
    }
}

/// Produces up to `k` variants per pair. With a backend, odd-numbered
/// variants are paraphrases of the question and even-numbered ones are
/// consistent renamings; without one, all are renamings. Output is the
/// input followed by admitted variants, grouped by parent.
pub fn augment_variance(
    pairs: &[QAPair],
    backend: Option<&dyn Backend>,
    k: usize,
) -> Result<Outcome, DatasetError> {
    let produced: Vec<Result<Vec<QAPair>, DatasetError>> = pairs
        .par_iter()
        .map(|p| (1..=k).map(|j| variant(p, j, backend)).collect())
        .collect();
    let mut out = Outcome {
        pairs: pairs.to_vec(),
        rejected: Vec::new(),
    };
    for variants in produced {
        admit(variants?, &mut out);
    }
    Ok(out)
}
