//! Instruction templates and context assembly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub const PLACEHOLDER: &str = "{{QUERY}}";

/// The instruction prompt shipped with the crate.
pub const DEFAULT_PROMPT: &str = include_str!("../data/prompts/default.prompt");

#[derive(Debug, thiserror::Error)]
pub enum ContextError {
    #[error("{}: no {PLACEHOLDER} placeholder", .0.display())]
    MissingPlaceholder(PathBuf),
    #[error("{path}: {PLACEHOLDER} appears {count} times", path = .0.display(), count = .1)]
    DuplicatePlaceholder(PathBuf, usize),
    #[error("{}: no .prompt files", .0.display())]
    EmptyDirectory(PathBuf),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("query is empty")]
    EmptyQuery,
    #[error("{path}: {err}", path = .0.display(), err = .1)]
    Io(PathBuf, std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionTemplate {
    pub template_id: String,
    pub body: String,
    pub description: String,
}

impl InstructionTemplate {
    /// Checks the single-placeholder rule. `origin` is only used in errors.
    pub fn new(template_id: &str, body: &str, origin: &Path) -> Result<Self, ContextError> {
        match body.matches(PLACEHOLDER).count() {
            0 => return Err(ContextError::MissingPlaceholder(origin.to_path_buf())),
            1 => {}
            n => return Err(ContextError::DuplicatePlaceholder(origin.to_path_buf(), n)),
        }
        let description = body
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.contains(PLACEHOLDER))
            .unwrap_or_default()
            .to_string();
        Ok(InstructionTemplate {
            template_id: template_id.to_string(),
            body: body.to_string(),
            description,
        })
    }
}

/// Templates keyed by id. Listing order is lexicographic.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, InstructionTemplate>,
}

impl TemplateRegistry {
    /// A registry holding only the shipped `default` template.
    pub fn builtin() -> Self {
        let mut r = TemplateRegistry::default();
        let t = InstructionTemplate::new("default", DEFAULT_PROMPT, Path::new("default.prompt"))
            .expect("shipped prompt has one placeholder");
        r.insert(t);
        r
    }

    pub fn insert(&mut self, t: InstructionTemplate) {
        self.templates.insert(t.template_id.clone(), t);
    }

    pub fn get(&self, id: &str) -> Option<&InstructionTemplate> {
        self.templates.get(id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.templates.keys().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

/// Loads every `*.prompt` file in `dir`; the file stem is the template id.
pub fn load_templates(dir: &Path) -> Result<TemplateRegistry, ContextError> {
    let io = |e| ContextError::Io(dir.to_path_buf(), e);
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "prompt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(ContextError::EmptyDirectory(dir.to_path_buf()));
    }
    let mut registry = TemplateRegistry::default();
    for path in paths {
        let body = fs::read_to_string(&path).map_err(|e| ContextError::Io(path.clone(), e))?;
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        registry.insert(InstructionTemplate::new(&id, &body, &path)?);
    }
    Ok(registry)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    pub text: String,
    pub template_id: String,
    /// Hex sha256 of the raw query.
    pub query_digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Substitutes `query` for the placeholder in one pass. Placeholder text
/// inside the query is left as is.
pub fn build_context(
    query: &str,
    template_id: &str,
    registry: &TemplateRegistry,
) -> Result<Context, ContextError> {
    if query.trim().is_empty() {
        return Err(ContextError::EmptyQuery);
    }
    let t = registry
        .get(template_id)
        .ok_or_else(|| ContextError::UnknownTemplate(template_id.to_string()))?;
    let (before, after) = t
        .body
        .split_once(PLACEHOLDER)
        .expect("templates are checked on construction");
    let mut text = String::with_capacity(t.body.len() + query.len());
    text.push_str(before);
    text.push_str(query);
    text.push_str(after);
    Ok(Context {
        text,
        template_id: template_id.to_string(),
        query_digest: sha256_hex(query.as_bytes()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg(body: &str) -> TemplateRegistry {
        let mut r = TemplateRegistry::default();
        r.insert(InstructionTemplate::new("t", body, Path::new("t.prompt")).unwrap());
        r
    }

    #[test]
    fn direct_substitution() {
        let c = build_context("hello", "t", &reg("T: {{QUERY}} :T")).unwrap();
        assert_eq!(c.text, "T: hello :T");
        assert_eq!(c.query_digest, sha256_hex(b"hello"));
    }

    #[test]
    fn query_keeps_its_whitespace() {
        let c = build_context("  q \n", "t", &reg("[{{QUERY}}]")).unwrap();
        assert_eq!(c.text, "[  q \n]");
    }

    #[test]
    fn placeholder_in_query_is_not_expanded() {
        let c = build_context("x {{QUERY}} y", "t", &reg("<{{QUERY}}>")).unwrap();
        assert_eq!(c.text, "<x {{QUERY}} y>");
    }

    #[test]
    fn rejects_bad_inputs() {
        let r = reg("{{QUERY}}");
        assert!(matches!(build_context(" \n", "t", &r), Err(ContextError::EmptyQuery)));
        assert!(matches!(
            build_context("q", "nope", &r),
            Err(ContextError::UnknownTemplate(_))
        ));
        assert!(matches!(
            InstructionTemplate::new("x", "none", Path::new("x.prompt")),
            Err(ContextError::MissingPlaceholder(_))
        ));
        assert!(matches!(
            InstructionTemplate::new("x", "{{QUERY}}{{QUERY}}", Path::new("x.prompt")),
            Err(ContextError::DuplicatePlaceholder(_, 2))
        ));
    }

    #[test]
    fn builtin_has_default() {
        let r = TemplateRegistry::builtin();
        assert_eq!(r.ids(), vec!["default"]);
        assert!(!r.get("default").unwrap().description.is_empty());
    }
}
