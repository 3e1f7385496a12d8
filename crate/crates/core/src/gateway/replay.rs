use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, FinishReason, GatewayError, GenerationRequest, GenerationResult, Usage};

/// One cassette line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub hash: String,
    pub model: String,
    pub temperature: f64,
    pub response_text: String,
    pub usage: Usage,
}

/// A JSON Lines file of recorded completions, keyed by request hash.
#[derive(Debug, Clone, Default)]
pub struct Cassette {
    entries: Vec<CassetteEntry>,
    index: HashMap<String, usize>,
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses JSON Lines text; `origin` names the source in errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self, GatewayError> {
        let mut c = Cassette::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(line)
                .map_err(|e| GatewayError::Config(format!("{origin}:{}: {e}", n + 1)))?;
            c.upsert(entry);
        }
        Ok(c)
    }

    /// The JSON Lines form written by `save`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entries serialize"));
            out.push('\n');
        }
        out
    }

    /// Loads `path`, or starts empty if it does not exist yet.
    pub fn load_or_empty(path: &Path) -> Result<Self, GatewayError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Cassette::default())
        }
    }

    pub fn get(&self, hash: &str) -> Option<&CassetteEntry> {
        self.index.get(hash).map(|&i| &self.entries[i])
    }

    /// Inserts or replaces the entry with the same hash, keeping its slot.
    pub fn upsert(&mut self, entry: CassetteEntry) {
        match self.index.get(&entry.hash) {
            Some(&i) => self.entries[i] = entry,
            None => {
                self.index.insert(entry.hash.clone(), self.entries.len());
                self.entries.push(entry);
            }
        }
    }

    pub fn entries(&self) -> &[CassetteEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes to a sibling temp file and renames it over `path`.
    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        let werr = |e: std::io::Error| GatewayError::CassetteWrite(format!("{}: {e}", path.display()));
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        {
            let mut f = fs::File::create(&tmp).map_err(werr)?;
            f.write_all(self.to_jsonl().as_bytes()).map_err(werr)?;
            f.sync_all().map_err(werr)?;
        }
        fs::rename(&tmp, path).map_err(werr)
    }
}

/// Serves completions from a cassette. A request with no entry is an error.
pub struct ReplayBackend {
    id: String,
    model: String,
    cassette: Cassette,
}

impl ReplayBackend {
    /// The model id is taken from the first entry, or the file stem when
    /// the cassette is empty.
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let cassette = Cassette::load(path)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("replay")
            .to_string();
        let model = cassette
            .entries()
            .first()
            .map(|e| e.model.clone())
            .unwrap_or(stem);
        Ok(Self::from_cassette(&model, cassette))
    }

    pub fn from_cassette(model: &str, cassette: Cassette) -> Self {
        ReplayBackend {
            id: format!("replay:{model}"),
            model: model.to_string(),
            cassette,
        }
    }

    pub fn cassette(&self) -> &Cassette {
        &self.cassette
    }
}

impl Backend for ReplayBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_id(&self) -> &str {
        &self.model
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        request.check()?;
        let hash = request.hash();
        let entry = self.cassette.get(&hash).ok_or_else(|| GatewayError::ReplayMiss {
            hash: hash.clone(),
            model: request.model_id.clone(),
        })?;
        Ok(GenerationResult {
            text: entry.response_text.clone(),
            finish_reason: FinishReason::Stop,
            usage: entry.usage,
            latency_ms: 0,
        })
    }
}

/// Wraps another backend and writes every successful completion to a
/// cassette file. Writes go through one lock.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    cassette: Mutex<Cassette>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B, path: &Path) -> Result<Self, GatewayError> {
        Ok(RecordingBackend {
            inner,
            path: path.to_path_buf(),
            cassette: Mutex::new(Cassette::load_or_empty(path)?),
        })
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        let result = self.inner.generate(request)?;
        let mut c = self.cassette.lock().unwrap_or_else(|p| p.into_inner());
        c.upsert(CassetteEntry {
            hash: request.hash(),
            model: request.model_id.clone(),
            temperature: request.temperature,
            response_text: result.text.clone(),
            usage: result.usage,
        });
        c.save(&self.path)?;
        Ok(result)
    }
}

/// Performs one call on `backend` and stores the result in `cassette`,
/// replacing any entry with the same request hash.
pub fn record(
    request: &GenerationRequest,
    backend: &dyn Backend,
    cassette: &Path,
) -> Result<GenerationResult, GatewayError> {
    let mut c = Cassette::load_or_empty(cassette)?;
    let result = backend.generate(request)?;
    c.upsert(CassetteEntry {
        hash: request.hash(),
        model: request.model_id.clone(),
        temperature: request.temperature,
        response_text: result.text.clone(),
        usage: result.usage,
    });
    c.save(cassette)?;
    Ok(result)
}
