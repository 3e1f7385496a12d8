use std::path::PathBuf;

use super::{PipelineConfig, DEFAULT_MAX_ATTEMPTS};
use crate::gateway::{LiveConfig, DEFAULT_API_BASE};

/// Environment variables named `MODELFORGE_<KEY>` override every other
/// source.
pub const ENV_PREFIX: &str = "MODELFORGE_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}: {1}")]
    Parse(String, String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{0}`: {1}")]
    BadValue(String, String),
}

/// Tool settings. Built from defaults, then a config file, then flags,
/// then environment variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub api_base: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_attempts: u32,
    pub template: String,
    pub template_dir: Option<PathBuf>,
    pub backend: String,
    pub fail_on_lint: bool,
    pub max_in_flight: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            api_base: DEFAULT_API_BASE.into(),
            model_id: "gpt-4o-mini".into(),
            temperature: 0.0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            template: "default".into(),
            template_dir: None,
            backend: "live".into(),
            fail_on_lint: false,
            max_in_flight: 4,
        }
    }
}

pub const KEYS: [&str; 9] = [
    "api_base",
    "model_id",
    "temperature",
    "max_attempts",
    "template",
    "template_dir",
    "backend",
    "fail_on_lint",
    "max_in_flight",
];

impl Settings {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |e: String| ConfigError::BadValue(key.to_string(), e);
        match key {
            "api_base" => self.api_base = value.trim_end_matches('/').to_string(),
            "model_id" => self.model_id = value.to_string(),
            "temperature" => {
                let t: f64 = value.parse().map_err(|e| bad(format!("{e}")))?;
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(bad("must be a finite value >= 0".into()));
                }
                self.temperature = t;
            }
            "max_attempts" => {
                let n: u32 = value.parse().map_err(|e| bad(format!("{e}")))?;
                if !(1..=super::MAX_ATTEMPTS_CAP).contains(&n) {
                    return Err(bad(format!("must be between 1 and {}", super::MAX_ATTEMPTS_CAP)));
                }
                self.max_attempts = n;
            }
            "template" => self.template = value.to_string(),
            "template_dir" => self.template_dir = Some(PathBuf::from(value)),
            "backend" => self.backend = value.to_string(),
            "fail_on_lint" => {
                self.fail_on_lint = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(bad("expected true or false".into())),
                }
            }
            "max_in_flight" => {
                let n: usize = value.parse().map_err(|e| bad(format!("{e}")))?;
                self.max_in_flight = n.max(1);
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies a flat `key = value` TOML document.
    pub fn apply_toml(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Parse(origin.to_string(), e.to_string()))?;
        for (k, v) in table {
            let value = match v {
                toml::Value::String(s) => s,
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                other => {
                    return Err(ConfigError::BadValue(k, format!("unsupported value {other}")))
                }
            };
            self.set(&k, &value)?;
        }
        Ok(())
    }

    /// Applies `MODELFORGE_<KEY>` variables from `vars`.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (k, v) in vars {
            let Some(key) = k.as_ref().strip_prefix(ENV_PREFIX) else { continue };
            let key = key.to_ascii_lowercase();
            if KEYS.contains(&key.as_str()) {
                self.set(&key, v.as_ref())?;
            }
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            template_id: self.template.clone(),
            backend_id: self.backend.clone(),
            max_attempts: self.max_attempts,
            fail_on_lint: self.fail_on_lint,
            temperature: self.temperature,
            ..PipelineConfig::default()
        }
    }

    /// Live backend settings; the credential comes from the environment.
    pub fn live(&self, model: Option<&str>) -> LiveConfig {
        let mut c = LiveConfig::new(&self.api_base, model.unwrap_or(&self.model_id)).with_env_key();
        c.max_in_flight = self.max_in_flight;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering() {
        let mut s = Settings::default();
        s.apply_toml("backend = \"replay:a.jsonl\"\nmax_attempts = 2\nfail_on_lint = true\n", "cfg")
            .unwrap();
        assert_eq!(s.backend, "replay:a.jsonl");
        assert_eq!(s.max_attempts, 2);
        assert!(s.fail_on_lint);
        s.set("backend", "replay:flag.jsonl").unwrap();
        s.apply_env([("MODELFORGE_BACKEND", "replay:env.jsonl"), ("HOME", "/x")])
            .unwrap();
        assert_eq!(s.backend, "replay:env.jsonl");
    }

    #[test]
    fn rejects_bad_values() {
        let mut s = Settings::default();
        assert!(matches!(s.set("nope", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(s.set("max_attempts", "11").is_err());
        assert!(s.set("max_attempts", "0").is_err());
        assert!(s.set("temperature", "-1").is_err());
        assert!(s.apply_toml("x = [1]", "cfg").is_err());
        assert!(s.apply_toml("not toml", "cfg").is_err());
    }

    #[test]
    fn api_key_is_not_a_setting() {
        let mut s = Settings::default();
        s.apply_env([("MODELFORGE_API_KEY", "sk-secret")]).unwrap();
        assert!(!format!("{s:?}").contains("sk-secret"));
    }
}
