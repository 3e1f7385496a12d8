//! S-expression reader and printer.
//!
//! The grammar is deliberately small: symbols, double-quoted strings with
//! `\"` and `\\` escapes, optionally signed decimal integers, lists, and
//! `;` line comments.

mod extract;
mod parse;
mod print;

pub use extract::{extract_blocks, Block, BlockOrigin};
pub use parse::{parse, ParseOutcome, MAX_DEPTH};
pub use print::{print, PrintStyle};
pub(crate) use print::quote_string;

use crate::diag::SourceSpan;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExprKind {
    Symbol(String),
    StringLit(String),
    Integer(i64),
    List(Vec<SExpr>),
}

/// A node with its source location. Equality is structural: spans are
/// ignored.
#[derive(Debug, Clone)]
pub struct SExpr {
    pub kind: SExprKind,
    pub span: SourceSpan,
}

impl PartialEq for SExpr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for SExpr {}

impl SExpr {
    pub fn new(kind: SExprKind, span: SourceSpan) -> Self {
        Self { kind, span }
    }

    pub fn symbol(s: impl Into<String>) -> Self {
        Self::new(SExprKind::Symbol(s.into()), SourceSpan::synthetic())
    }

    pub fn string(s: impl Into<String>) -> Self {
        Self::new(SExprKind::StringLit(s.into()), SourceSpan::synthetic())
    }

    pub fn integer(v: i64) -> Self {
        Self::new(SExprKind::Integer(v), SourceSpan::synthetic())
    }

    pub fn list(children: Vec<SExpr>) -> Self {
        Self::new(SExprKind::List(children), SourceSpan::synthetic())
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match &self.kind {
            SExprKind::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match &self.kind {
            SExprKind::List(items) => Some(items),
            _ => None,
        }
    }

    /// The head symbol of a list such as `(send x)`.
    pub fn head(&self) -> Option<&str> {
        self.as_list()?.first()?.as_symbol()
    }

    pub fn is_list(&self) -> bool {
        matches!(self.kind, SExprKind::List(_))
    }

    /// Depth of list nesting; atoms have depth 0.
    pub fn depth(&self) -> usize {
        match &self.kind {
            SExprKind::List(items) => 1 + items.iter().map(SExpr::depth).max().unwrap_or(0),
            _ => 0,
        }
    }
}

/// True when `s` can be printed as a bare symbol and read back unchanged.
pub fn is_valid_symbol(s: &str) -> bool {
    !s.is_empty()
        && !s
            .chars()
            .any(|c| c.is_whitespace() || c.is_control() || matches!(c, '(' | ')' | '"' | ';'))
        && !looks_like_integer(s)
}

pub(crate) fn looks_like_integer(s: &str) -> bool {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) && s.parse::<i64>().is_ok()
}
