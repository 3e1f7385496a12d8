//! Typed CPSA protocol model lowered from s-expressions.
//!
//! Equality on every model type is structural: source spans are ignored and
//! variable declarations compare as a set, since the order of a `vars`
//! clause carries no meaning.

mod format;
mod lint;
mod lower;
mod rename;
mod validate;

pub use format::{format_unit, term_to_sexpr};
pub use lint::{lint, RESERVED_WORDS};
pub use lower::{lower, lower_term};
pub use rename::{rename_unit, Renaming};
pub use validate::{validate_protocol, validate_skeleton, validate_unit};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diag::{sort_diagnostics, Diagnostic, SourceSpan};
use crate::sexpr::{self, SExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sort {
    Name,
    Text,
    Data,
    Skey,
    Akey,
    Mesg,
}

impl Sort {
    pub const ALL: [Sort; 6] = [
        Sort::Name,
        Sort::Text,
        Sort::Data,
        Sort::Skey,
        Sort::Akey,
        Sort::Mesg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Sort::Name => "name",
            Sort::Text => "text",
            Sort::Data => "data",
            Sort::Skey => "skey",
            Sort::Akey => "akey",
            Sort::Mesg => "mesg",
        }
    }

    pub fn is_key(self) -> bool {
        matches!(self, Sort::Akey | Sort::Skey)
    }
}

impl FromStr for Sort {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Sort::ALL.into_iter().find(|k| k.as_str() == s).ok_or(())
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Tag(String),
    PubKeyOf(Box<Term>),
    InvKeyOf(Box<Term>),
    LongTermKey(Box<Term>, Box<Term>),
    Cat(Vec<Term>),
    Enc(Box<Term>, Box<Term>),
    Hash(Box<Term>),
}

/// Operator kinds, named by their CPSA spelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "enc")]
    Enc,
    #[serde(rename = "pubk")]
    PubKeyOf,
    #[serde(rename = "invk")]
    InvKeyOf,
    #[serde(rename = "ltk")]
    LongTermKey,
    #[serde(rename = "cat")]
    Cat,
    #[serde(rename = "hash")]
    Hash,
    #[serde(rename = "tag")]
    Tag,
}

impl Operator {
    pub fn as_str(self) -> &'static str {
        match self {
            Operator::Enc => "enc",
            Operator::PubKeyOf => "pubk",
            Operator::InvKeyOf => "invk",
            Operator::LongTermKey => "ltk",
            Operator::Cat => "cat",
            Operator::Hash => "hash",
            Operator::Tag => "tag",
        }
    }
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_string())
    }

    pub fn operator(&self) -> Option<Operator> {
        Some(match self {
            Term::Var(_) => return None,
            Term::Tag(_) => Operator::Tag,
            Term::PubKeyOf(_) => Operator::PubKeyOf,
            Term::InvKeyOf(_) => Operator::InvKeyOf,
            Term::LongTermKey(..) => Operator::LongTermKey,
            Term::Cat(_) => Operator::Cat,
            Term::Enc(..) => Operator::Enc,
            Term::Hash(_) => Operator::Hash,
        })
    }

    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::Var(_) | Term::Tag(_) => vec![],
            Term::PubKeyOf(t) | Term::InvKeyOf(t) | Term::Hash(t) => vec![t],
            Term::LongTermKey(a, b) | Term::Enc(a, b) => vec![a, b],
            Term::Cat(parts) => parts.iter().collect(),
        }
    }

    /// Pre-order walk over the term and all of its subterms.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Term)) {
        f(self);
        for child in self.children() {
            child.walk(f);
        }
    }

    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |t| {
            if let Term::Var(v) = t {
                out.push(v.as_str());
            }
        });
        out
    }

    pub fn operators(&self) -> BTreeSet<Operator> {
        let mut out = BTreeSet::new();
        self.walk(&mut |t| out.extend(t.operator()));
        out
    }

    /// Whether `needle` is carried by this term: reachable through
    /// concatenation and encryption payloads, but not keys or hashes.
    pub fn carries(&self, needle: &Term) -> bool {
        if self == needle {
            return true;
        }
        match self {
            Term::Cat(parts) => parts.iter().any(|p| p.carries(needle)),
            Term::Enc(payload, _) => payload.carries(needle),
            _ => false,
        }
    }

    /// Inferred sort, or `None` for an undeclared variable.
    pub fn sort(&self, vars: &Vars) -> Option<Sort> {
        match self {
            Term::Var(v) => vars.sort_of(v),
            Term::PubKeyOf(_) | Term::InvKeyOf(_) => Some(Sort::Akey),
            Term::LongTermKey(..) => Some(Sort::Skey),
            Term::Tag(_) | Term::Cat(_) | Term::Enc(..) | Term::Hash(_) => Some(Sort::Mesg),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&sexpr::print(&term_to_sexpr(self), sexpr::PrintStyle::Compact))
    }
}

#[derive(Debug, Clone)]
pub struct VarDecl {
    pub name: String,
    pub sort: Sort,
    pub span: SourceSpan,
}

/// Declared variables in declaration order.
#[derive(Debug, Clone, Default)]
pub struct Vars(Vec<VarDecl>);

impl Vars {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Sort)>) -> Self {
        let mut v = Vars::new();
        for (name, sort) in pairs {
            v.insert(name, sort, SourceSpan::synthetic());
        }
        v
    }

    /// Adds a declaration; returns false (and keeps the first) on a duplicate.
    pub fn insert(&mut self, name: &str, sort: Sort, span: SourceSpan) -> bool {
        if self.contains(name) {
            return false;
        }
        self.0.push(VarDecl {
            name: name.to_string(),
            sort,
            span,
        });
        true
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.iter().any(|d| d.name == name)
    }

    pub fn sort_of(&self, name: &str) -> Option<Sort> {
        self.0.iter().find(|d| d.name == name).map(|d| d.sort)
    }

    pub fn iter(&self) -> impl Iterator<Item = &VarDecl> {
        self.0.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut VarDecl> {
        self.0.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn remove(&mut self, name: &str) -> Option<VarDecl> {
        let idx = self.0.iter().position(|d| d.name == name)?;
        Some(self.0.remove(idx))
    }

    /// Declarations grouped by sort, sorts in order of first appearance.
    pub fn grouped(&self) -> Vec<(Sort, Vec<&str>)> {
        let mut groups: Vec<(Sort, Vec<&str>)> = Vec::new();
        for d in &self.0 {
            match groups.iter_mut().find(|(s, _)| *s == d.sort) {
                Some((_, names)) => names.push(&d.name),
                None => groups.push((d.sort, vec![&d.name])),
            }
        }
        groups
    }

    fn as_set(&self) -> BTreeSet<(&str, Sort)> {
        self.0.iter().map(|d| (d.name.as_str(), d.sort)).collect()
    }
}

impl PartialEq for Vars {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.as_set() == other.as_set()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Send,
    Recv,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Send => "send",
            Direction::Recv => "recv",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event {
    pub direction: Direction,
    pub message: Term,
    pub span: SourceSpan,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.direction == other.direction && self.message == other.message
    }
}

#[derive(Debug, Clone)]
pub struct Role {
    pub name: String,
    pub vars: Vars,
    pub trace: Vec<Event>,
    pub uniq_orig: Vec<Term>,
    pub non_orig: Vec<Term>,
    pub span: SourceSpan,
}

impl PartialEq for Role {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.vars == other.vars
            && self.trace == other.trace
            && self.uniq_orig == other.uniq_orig
            && self.non_orig == other.non_orig
    }
}

impl Role {
    /// Every variable occurrence in the trace and origination assumptions,
    /// with the span of the clause it came from.
    pub fn variable_uses(&self) -> Vec<(&str, SourceSpan)> {
        let mut out = Vec::new();
        for ev in &self.trace {
            out.extend(ev.message.variables().into_iter().map(|v| (v, ev.span)));
        }
        for t in self.uniq_orig.iter().chain(&self.non_orig) {
            out.extend(t.variables().into_iter().map(|v| (v, self.span)));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Protocol {
    pub name: String,
    pub algebra: String,
    pub roles: Vec<Role>,
    pub span: SourceSpan,
}

impl PartialEq for Protocol {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.algebra == other.algebra && self.roles == other.roles
    }
}

impl Protocol {
    pub fn role(&self, name: &str) -> Option<&Role> {
        self.roles.iter().find(|r| r.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct Strand {
    pub role: String,
    pub height: u32,
    pub bindings: Vec<(String, Term)>,
    pub span: SourceSpan,
}

impl PartialEq for Strand {
    fn eq(&self, other: &Self) -> bool {
        self.role == other.role && self.height == other.height && self.bindings == other.bindings
    }
}

#[derive(Debug, Clone)]
pub struct Skeleton {
    pub protocol: String,
    pub vars: Vars,
    pub strands: Vec<Strand>,
    pub listeners: Vec<Term>,
    pub non_orig: Vec<Term>,
    pub uniq_orig: Vec<Term>,
    pub span: SourceSpan,
}

impl PartialEq for Skeleton {
    fn eq(&self, other: &Self) -> bool {
        self.protocol == other.protocol
            && self.vars == other.vars
            && self.strands == other.strands
            && self.listeners == other.listeners
            && self.non_orig == other.non_orig
            && self.uniq_orig == other.uniq_orig
    }
}

impl Skeleton {
    /// All terms the skeleton mentions, with the span to blame.
    pub fn terms(&self) -> Vec<(&Term, SourceSpan)> {
        let mut out = Vec::new();
        for s in &self.strands {
            out.extend(s.bindings.iter().map(|(_, t)| (t, s.span)));
        }
        for t in self.listeners.iter().chain(&self.non_orig).chain(&self.uniq_orig) {
            out.push((t, self.span));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Herald {
    pub title: String,
    pub span: SourceSpan,
}

impl PartialEq for Herald {
    fn eq(&self, other: &Self) -> bool {
        self.title == other.title
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitItem {
    Herald,
    Protocol(usize),
    Skeleton(usize),
    Opaque(usize),
}

/// Everything lowered from one file or one generated answer.
#[derive(Debug, Clone, Default)]
pub struct CpsaUnit {
    pub herald: Option<Herald>,
    pub protocols: Vec<Protocol>,
    pub skeletons: Vec<Skeleton>,
    /// Top-level forms kept verbatim without analysis.
    pub opaque: Vec<SExpr>,
    pub source_order: Vec<UnitItem>,
}

impl PartialEq for CpsaUnit {
    fn eq(&self, other: &Self) -> bool {
        self.herald == other.herald
            && self.protocols == other.protocols
            && self.skeletons == other.skeletons
            && self.opaque == other.opaque
    }
}

impl CpsaUnit {
    pub fn protocol(&self, name: &str) -> Option<&Protocol> {
        self.protocols.iter().find(|p| p.name == name)
    }

    pub fn roles(&self) -> impl Iterator<Item = &Role> {
        self.protocols.iter().flat_map(|p| &p.roles)
    }

    /// Whether any role or skeleton declares `name`.
    pub fn declares(&self, name: &str) -> bool {
        self.roles().any(|r| r.vars.contains(name))
            || self.skeletons.iter().any(|s| s.vars.contains(name))
    }

    pub fn operators(&self) -> BTreeSet<Operator> {
        let mut out = BTreeSet::new();
        for r in self.roles() {
            for t in r.trace.iter().map(|e| &e.message).chain(&r.uniq_orig).chain(&r.non_orig) {
                out.extend(t.operators());
            }
        }
        for s in &self.skeletons {
            for (t, _) in s.terms() {
                out.extend(t.operators());
            }
        }
        out
    }
}

/// Result of reading, lowering, validating and linting one text.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub unit: CpsaUnit,
    /// Reader, lowering, validation and lint findings, ordered by span then code.
    pub diagnostics: Vec<Diagnostic>,
}

impl Analysis {
    pub fn error_count(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.is_error()).count()
    }
}

/// Runs the full front end over `text`.
pub fn analyze(text: &str) -> Analysis {
    let parsed = sexpr::parse(text);
    let (unit, mut diagnostics) = lower(&parsed.forms);
    diagnostics.extend(parsed.diagnostics);
    diagnostics.extend(validate_unit(&unit));
    diagnostics.extend(lint(&unit));
    sort_diagnostics(&mut diagnostics);
    Analysis { unit, diagnostics }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sort_inference() {
        let vars = Vars::from_pairs([("a", Sort::Name), ("k", Sort::Skey)]);
        let pk = Term::PubKeyOf(Box::new(Term::var("a")));
        assert_eq!(pk.sort(&vars), Some(Sort::Akey));
        assert_eq!(Term::InvKeyOf(Box::new(pk.clone())).sort(&vars), Some(Sort::Akey));
        let ltk = Term::LongTermKey(Box::new(Term::var("a")), Box::new(Term::var("a")));
        assert_eq!(ltk.sort(&vars), Some(Sort::Skey));
        assert_eq!(Term::Tag("t".into()).sort(&vars), Some(Sort::Mesg));
        assert_eq!(Term::var("k").sort(&vars), Some(Sort::Skey));
        assert_eq!(Term::var("zz").sort(&vars), None);
    }

    #[test]
    fn carried_positions() {
        let s = Term::var("s");
        let signed = Term::Enc(Box::new(s.clone()), Box::new(Term::var("k")));
        assert!(signed.carries(&s));
        let as_key = Term::Enc(Box::new(Term::var("m")), Box::new(s.clone()));
        assert!(!as_key.carries(&s));
        assert!(!Term::Hash(Box::new(s.clone())).carries(&s));
        assert!(Term::Cat(vec![Term::var("x"), s.clone()]).carries(&s));
    }

    #[test]
    fn vars_compare_as_sets() {
        let a = Vars::from_pairs([("a", Sort::Name), ("n", Sort::Text)]);
        let b = Vars::from_pairs([("n", Sort::Text), ("a", Sort::Name)]);
        assert_eq!(a, b);
        let c = Vars::from_pairs([("n", Sort::Data), ("a", Sort::Name)]);
        assert_ne!(a, c);
    }

    #[test]
    fn grouping_is_a_stable_partition() {
        let v = Vars::from_pairs([
            ("a", Sort::Akey),
            ("s", Sort::Skey),
            ("b", Sort::Akey),
            ("d", Sort::Data),
        ]);
        let g = v.grouped();
        assert_eq!(
            g,
            vec![
                (Sort::Akey, vec!["a", "b"]),
                (Sort::Skey, vec!["s"]),
                (Sort::Data, vec!["d"])
            ]
        );
    }
}
