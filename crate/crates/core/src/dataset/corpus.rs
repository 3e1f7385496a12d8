use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Provenance, QAPair, Split};

fn io_err(path: &Path, e: impl ToString) -> DatasetError {
    DatasetError::Io(path.to_path_buf(), e.to_string())
}

/// Group-wise split: pairs from one seed never straddle the partition.
/// Groups are shuffled under `rng_seed` and taken into the training side
/// whenever doing so moves its size closer to `round(fraction * N)`.
pub fn split(
    pairs: &[QAPair],
    train_fraction: f64,
    rng_seed: u64,
) -> Result<(Vec<QAPair>, Vec<QAPair>), DatasetError> {
    if pairs.is_empty() {
        return Err(DatasetError::Empty);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(train_fraction));
    }
    let mut groups: BTreeMap<&str, usize> = BTreeMap::new();
    for p in pairs {
        *groups.entry(p.provenance.seed_id.as_str()).or_default() += 1;
    }
    let mut order: Vec<(&str, usize)> = groups.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));

    let target = (train_fraction * pairs.len() as f64).round() as i64;
    let mut size = 0i64;
    let mut train_seeds = std::collections::HashSet::new();
    for (seed, n) in order {
        let n = n as i64;
        if (size + n - target).abs() < (size - target).abs() {
            size += n;
            train_seeds.insert(seed);
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for p in pairs {
        let mut p = p.clone();
        if train_seeds.contains(p.provenance.seed_id.as_str()) {
            p.split = Some(Split::Train);
            train.push(p);
        } else {
            p.split = Some(Split::Test);
            test.push(p);
        }
    }
    if train.is_empty() {
        return Err(DatasetError::DegenerateSplit("train"));
    }
    if test.is_empty() {
        return Err(DatasetError::DegenerateSplit("test"));
    }
    Ok((train, test))
}

/// Rough token count for one chat message: a quarter token per byte,
/// rounded up, plus four tokens of framing.
pub fn estimate_tokens(content: &str) -> u64 {
    (content.len() as u64).div_ceil(4) + 4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportReport {
    pub pair_count: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub estimated_tokens: u64,
    pub epochs: u32,
    pub estimated_training_tokens: u64,
}

#[derive(Serialize, Deserialize)]
struct WireMessage {
    role: String,
    content: String,
}

#[derive(Serialize, Deserialize)]
struct WireExample {
    messages: Vec<WireMessage>,
}

fn messages(p: &QAPair, system_prompt: &str) -> Vec<WireMessage> {
    let mut m = Vec::with_capacity(3);
    if !system_prompt.is_empty() {
        m.push(WireMessage { role: "system".into(), content: system_prompt.into() });
    }
    m.push(WireMessage { role: "user".into(), content: p.question.clone() });
    m.push(WireMessage { role: "assistant".into(), content: p.answer.clone() });
    m
}

/// Writes one chat example per line. An empty system prompt leaves the
/// system message out.
pub fn export_jsonl(
    pairs: &[QAPair],
    system_prompt: &str,
    out: &Path,
    epochs: u32,
) -> Result<ExportReport, DatasetError> {
    let mut report = ExportReport {
        pair_count: pairs.len(),
        train_count: 0,
        test_count: 0,
        estimated_tokens: 0,
        epochs,
        estimated_training_tokens: 0,
    };
    let mut train_tokens = 0;
    let file = fs::File::create(out).map_err(|e| io_err(out, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        let split = p.split.ok_or_else(|| DatasetError::Unsplit(p.pair_id.clone()))?;
        let msgs = messages(p, system_prompt);
        let tokens: u64 = msgs.iter().map(|m| estimate_tokens(&m.content)).sum();
        report.estimated_tokens += tokens;
        match split {
            Split::Train => {
                report.train_count += 1;
                train_tokens += tokens;
            }
            Split::Test => report.test_count += 1,
        }
        let line = serde_json::to_string(&WireExample { messages: msgs }).expect("serializable");
        writeln!(w, "{line}").map_err(|e| io_err(out, e))?;
    }
    w.flush().map_err(|e| io_err(out, e))?;
    report.estimated_training_tokens = u64::from(epochs) * train_tokens;
    Ok(report)
}

/// Reads an export back as (question, answer) pairs.
pub fn read_jsonl(path: &Path) -> Result<Vec<(String, String)>, DatasetError> {
    let f = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| io_err(path, e))?;
        let ex: WireExample = serde_json::from_str(&line).map_err(|e| io_err(path, e))?;
        let find = |role: &str| {
            ex.messages
                .iter()
                .find(|m| m.role == role)
                .map(|m| m.content.clone())
                .unwrap_or_default()
        };
        out.push((find("user"), find("assistant")));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub pairs: Vec<ManifestEntry>,
}

fn pair_file(dir: &Path, id: &str) -> std::path::PathBuf {
    dir.join(format!("pair-{id}.json"))
}

/// Writes `pair-<id>.json` per pair and a `manifest.json` listing them in
/// order. Stale pair files from an earlier run are removed.
pub fn save_corpus(dir: &Path, pairs: &[QAPair]) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("pair-") && name.ends_with(".json") {
            fs::remove_file(&path).map_err(|e| io_err(&path, e))?;
        }
    }
    for p in pairs {
        let path = pair_file(dir, &p.pair_id);
        let text = serde_json::to_string_pretty(p).expect("serializable");
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    }
    let manifest = Manifest {
        pairs: pairs
            .iter()
            .map(|p| ManifestEntry {
                pair_id: p.pair_id.clone(),
                provenance: p.provenance.clone(),
                split: p.split,
            })
            .collect(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("serializable");
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
}

/// Reads a corpus in manifest order. The manifest's split wins over the
/// one stored in the pair file.
pub fn load_corpus(dir: &Path) -> Result<Vec<QAPair>, DatasetError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
    manifest
        .pairs
        .iter()
        .map(|m| {
            let path = pair_file(dir, &m.pair_id);
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let mut p: QAPair = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
            p.split = m.split;
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Generation;

    fn pair(id: &str, seed: &str) -> QAPair {
        QAPair {
            pair_id: id.into(),
            question: format!("q {id}"),
            answer: "a".into(),
            provenance: Provenance { seed_id: seed.into(), generation: Generation::Seed },
            split: None,
        }
    }

    #[test]
    fn token_estimate() {
        assert_eq!(estimate_tokens(""), 4);
        assert_eq!(estimate_tokens("abcd"), 5);
        assert_eq!(estimate_tokens("abcde"), 6);
    }

    #[test]
    fn single_group_is_degenerate() {
        let pairs = vec![pair("1", "s"), pair("2", "s")];
        assert!(matches!(split(&pairs, 0.5, 1), Err(DatasetError::DegenerateSplit(_))));
        assert!(matches!(split(&pairs, 1.0, 1), Err(DatasetError::BadFraction(_))));
        assert!(matches!(split(&[], 0.5, 1), Err(DatasetError::Empty)));
    }

    #[test]
    fn unsplit_pairs_refused() {
        let dir = tempfile::tempdir().unwrap();
        let err = export_jsonl(&[pair("1", "s")], "", &dir.path().join("x.jsonl"), 1).unwrap_err();
        assert!(matches!(err, DatasetError::Unsplit(_)));
    }
}
