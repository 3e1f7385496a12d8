//! Building fine-tuning corpora of (specification, definition) pairs.

mod corpus;
mod forge;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cpsa::analyze;
use crate::gateway::GatewayError;

pub use corpus::{
    estimate_tokens, export_jsonl, load_corpus, read_jsonl, save_corpus, split, ExportReport,
    Manifest, ManifestEntry,
};
pub use forge::{
    augment_variance, is_near_duplicate, normalize_question, paraphrase_prompt, rename_question,
    synthesize_pairs, synthesis_prompt, variant_renaming, Outcome, Rejection,
};

pub const DEFAULT_PER_SEED: usize = 2;
pub const DEFAULT_VARIANTS: usize = 16;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;
pub const DEFAULT_EPOCHS: u32 = 3;

/// Losses the hosted fine-tuning job reported for the 340-pair corpus.
/// Kept for reference; nothing here computes a loss.
pub const REPORTED_TRAINING_LOSS: f64 = 0.2976;
pub const REPORTED_VALIDATION_LOSS: f64 = 0.3902;

/// System prompt used when exporting chat-format training data.
pub const FINETUNE_SYSTEM_PROMPT: &str = include_str!("../../data/prompts/finetune_system.txt");

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("seed `{0}` does not validate: {1}")]
    InvalidSeed(String, String),
    #[error("every candidate for seed `{0}` was rejected")]
    AllCandidatesRejected(String),
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("split leaves the {0} side empty")]
    DegenerateSplit(&'static str),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("pair `{0}` has no split assigned")]
    Unsplit(String),
    #[error("no pairs")]
    Empty,
    #[error("{path}: {msg}", path = .0.display(), msg = .1)]
    Io(PathBuf, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTemplate {
    pub seed_id: String,
    pub cpsa_text: String,
    pub topic: String,
}

impl SeedTemplate {
    /// Validates `cpsa_text`; it must analyze with no errors.
    pub fn new(seed_id: &str, cpsa_text: &str, topic: &str) -> Result<Self, DatasetError> {
        let a = analyze(cpsa_text);
        if let Some(d) = a.diagnostics.iter().find(|d| d.is_error()) {
            return Err(DatasetError::InvalidSeed(seed_id.to_string(), d.to_string()));
        }
        Ok(SeedTemplate {
            seed_id: seed_id.to_string(),
            cpsa_text: cpsa_text.to_string(),
            topic: topic.to_string(),
        })
    }

    /// Reads the topic from a leading `; topic:` comment line.
    pub fn from_source(seed_id: &str, text: &str) -> Result<Self, DatasetError> {
        let topic = text
            .lines()
            .find_map(|l| l.trim().strip_prefix("; topic:"))
            .unwrap_or_default()
            .trim();
        Self::new(seed_id, text, topic)
    }
}

const BUILTIN_SEEDS: [(&str, &str); 10] = [
    ("blanchet", include_str!("../../data/seeds/blanchet.scm")),
    ("denning_sacco", include_str!("../../data/seeds/denning_sacco.scm")),
    ("hash_challenge", include_str!("../../data/seeds/hash_challenge.scm")),
    ("iso9798_3", include_str!("../../data/seeds/iso9798_3.scm")),
    ("kerberos", include_str!("../../data/seeds/kerberos.scm")),
    ("ns", include_str!("../../data/seeds/ns.scm")),
    ("nsl", include_str!("../../data/seeds/nsl.scm")),
    ("otway_rees", include_str!("../../data/seeds/otway_rees.scm")),
    ("wide_mouth_frog", include_str!("../../data/seeds/wide_mouth_frog.scm")),
    ("yahalom", include_str!("../../data/seeds/yahalom.scm")),
];

/// The ten seed templates shipped with the crate, ordered by id.
pub fn builtin_seeds() -> Vec<SeedTemplate> {
    BUILTIN_SEEDS
        .iter()
        .map(|(id, text)| SeedTemplate::from_source(id, text).expect("shipped seeds validate"))
        .collect()
}

/// Loads every `*.scm` file in `dir` as a seed, ordered by id.
pub fn load_seeds(dir: &Path) -> Result<Vec<SeedTemplate>, DatasetError> {
    let io = |p: &Path, e: std::io::Error| DatasetError::Io(p.to_path_buf(), e.to_string());
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scm"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| io(p, e))?;
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            SeedTemplate::from_source(id, &text)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    Paraphrase,
    Rename,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generation {
    Seed,
    BackTranslated,
    Variance { parent_id: String, method: VarianceMethod },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed_id: String,
    pub generation: Generation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub pair_id: String,
    pub question: String,
    pub answer: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}
