use std::path::PathBuf;
use std::str::FromStr;

use super::Settings;
use crate::gateway::{Backend, Cassette, GatewayError, LiveBackend, ReplayBackend, API_KEY_ENV};

/// Cassettes compiled into the binary, by name.
pub const BUILTIN_CASSETTES: [(&str, &str); 7] = [
    ("dataset", include_str!("../../data/cassettes/dataset.jsonl")),
    ("translate", include_str!("../../data/cassettes/translate.jsonl")),
    ("general-small", include_str!("../../data/cassettes/general-small.jsonl")),
    ("general-medium", include_str!("../../data/cassettes/general-medium.jsonl")),
    ("general-large", include_str!("../../data/cassettes/general-large.jsonl")),
    ("forge-base", include_str!("../../data/cassettes/forge-base.jsonl")),
    ("forge-tuned", include_str!("../../data/cassettes/forge-tuned.jsonl")),
];

pub fn builtin_cassette(name: &str) -> Option<&'static str> {
    BUILTIN_CASSETTES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// How a backend id is written on the command line or in config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    /// `replay:<path>` for a cassette file.
    Replay(PathBuf),
    /// `builtin:<name>` for a cassette shipped in the binary.
    Builtin(String),
    /// `live` or `live:<model>`.
    Live(Option<String>),
}

impl FromStr for BackendSpec {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GatewayError::Config(format!("unknown backend `{s}`; expected replay:<path>, builtin:<name>, live or live:<model>"));
        match s.split_once(':') {
            None if s == "live" => Ok(BackendSpec::Live(None)),
            Some(("live", m)) if !m.is_empty() => Ok(BackendSpec::Live(Some(m.to_string()))),
            Some(("replay", p)) if !p.is_empty() => Ok(BackendSpec::Replay(PathBuf::from(p))),
            Some(("builtin", n)) if builtin_cassette(n).is_some() => {
                Ok(BackendSpec::Builtin(n.to_string()))
            }
            _ => Err(bad()),
        }
    }
}

/// Opens a backend by id. A live backend needs `MODELFORGE_API_KEY` set.
pub fn open_backend(spec: &str, settings: &Settings) -> Result<Box<dyn Backend>, GatewayError> {
    Ok(match spec.parse::<BackendSpec>()? {
        BackendSpec::Replay(path) => Box::new(ReplayBackend::open(&path)?),
        BackendSpec::Builtin(name) => {
            let text = builtin_cassette(&name).expect("checked when parsed");
            let cassette = Cassette::parse(text, &name)?;
            let model = cassette
                .entries()
                .first()
                .map(|e| e.model.clone())
                .unwrap_or_else(|| name.clone());
            Box::new(ReplayBackend::from_cassette(&model, cassette))
        }
        BackendSpec::Live(model) => {
            let config = settings.live(model.as_deref());
            if config.api_key.is_none() {
                return Err(GatewayError::Config(format!("{API_KEY_ENV} is not set")));
            }
            Box::new(LiveBackend::new(config)?)
        }
    })
}
