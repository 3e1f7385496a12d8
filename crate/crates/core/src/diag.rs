//! Source spans, severity-coded diagnostics, and the closed registry of
//! diagnostic codes shared by the reader, the lowering pass, the validators
//! and the linter.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A byte range in the source text together with the 1-based line and
/// column (in characters) of its first byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceSpan {
    pub start_byte: usize,
    pub end_byte: usize,
    pub line: usize,
    pub column: usize,
}

impl SourceSpan {
    pub fn new(start_byte: usize, end_byte: usize, line: usize, column: usize) -> Self {
        debug_assert!(start_byte <= end_byte);
        debug_assert!(line >= 1 && column >= 1);
        Self {
            start_byte,
            end_byte,
            line,
            column,
        }
    }

    /// Span used for synthesized nodes that have no source location.
    pub fn synthetic() -> Self {
        Self::new(0, 0, 1, 1)
    }

    pub fn contains(&self, other: &SourceSpan) -> bool {
        self.start_byte <= other.start_byte && other.end_byte <= self.end_byte
    }

    pub fn len(&self) -> usize {
        self.end_byte - self.start_byte
    }

    pub fn is_empty(&self) -> bool {
        self.start_byte == self.end_byte
    }
}

impl Default for SourceSpan {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Lint,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Lint => "lint",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

macro_rules! codes {
    ($( $variant:ident => ($code:literal, $sev:ident, $desc:literal), )*) => {
        /// Every diagnostic the toolkit can emit. The string form is stable.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Code {
            $( $variant, )*
        }

        impl Code {
            pub const ALL: &'static [Code] = &[ $( Code::$variant, )* ];

            pub fn as_str(self) -> &'static str {
                match self { $( Code::$variant => $code, )* }
            }

            pub fn severity(self) -> Severity {
                match self { $( Code::$variant => Severity::$sev, )* }
            }

            pub fn description(self) -> &'static str {
                match self { $( Code::$variant => $desc, )* }
            }

            pub fn from_str_code(s: &str) -> Option<Code> {
                match s { $( $code => Some(Code::$variant), )* _ => None }
            }
        }
    };
}

codes! {
    // reader
    UnbalancedOpen => ("E-UNBALANCED-OPEN", Error, "A list is opened with `(` but never closed."),
    UnbalancedClose => ("E-UNBALANCED-CLOSE", Error, "A `)` appears with no matching `(`."),
    UnterminatedString => ("E-UNTERMINATED-STRING", Error, "A string literal runs to the end of input without a closing `\"`."),
    InvalidCharacter => ("E-INVALID-CHAR", Error, "A control character that cannot start any token."),
    NestingTooDeep => ("E-NESTING-TOO-DEEP", Error, "Lists nest deeper than 256 levels; the enclosing top-level form is dropped."),
    // lowering
    UnknownForm => ("E-UNKNOWN-FORM", Error, "An unrecognized head symbol inside a recognized construct."),
    BadArity => ("E-BAD-ARITY", Error, "An operator or construct has the wrong number of arguments."),
    BadSort => ("E-BAD-SORT", Error, "A variable declaration names a sort outside {name, text, data, skey, akey, mesg}."),
    Malformed => ("E-MALFORMED", Error, "An argument has the wrong shape, e.g. a list where a name is expected."),
    DuplicateRole => ("E-DUPLICATE-ROLE", Error, "Two roles in one protocol share a name; the later one is dropped."),
    DuplicateVar => ("E-DUPLICATE-VAR", Error, "A variable is declared twice in one vars list; the later declaration is dropped."),
    BadHeight => ("E-BAD-HEIGHT", Error, "A strand height is not a positive integer."),
    UnsupportedForm => ("W-UNSUPPORTED-FORM", Warning, "A top-level form that is kept verbatim but not analyzed (e.g. defgoal, non-basic algebra)."),
    DuplicateHerald => ("W-DUPLICATE-HERALD", Warning, "More than one herald form; only the first is kept."),
    // validation
    UndeclaredVar => ("E-UNDECLARED-VAR", Error, "A variable is used but not declared in the enclosing vars list."),
    InvkSort => ("E-INVK-SORT", Error, "`invk` is applied to a term whose sort is neither akey nor mesg."),
    EmptyTrace => ("E-EMPTY-TRACE", Error, "A role has no send or recv events."),
    OrigNotCarried => ("E-ORIG-NOT-CARRIED", Error, "A uniq-orig term is never carried by any message of the role's trace."),
    NoSuchProtocol => ("E-NO-SUCH-PROTOCOL", Error, "A skeleton names a protocol that is not defined in the unit."),
    NoSuchRole => ("E-NO-SUCH-ROLE", Error, "A strand names a role that the protocol does not define."),
    HeightExceedsTrace => ("E-HEIGHT-EXCEEDS-TRACE", Error, "A strand height is larger than the length of its role's trace."),
    BadBinding => ("E-BAD-BINDING", Error, "A strand binding's left side is not a variable of the role."),
    NoProtocol => ("E-NO-PROTOCOL", Error, "The candidate output contains no defprotocol form."),
    UnusedVar => ("W-UNUSED-VAR", Warning, "A declared variable is never used."),
    WeakKeySort => ("W-WEAK-KEY-SORT", Warning, "An encryption key has sort text or data."),
    // lints
    ShadowsBuiltin => ("L-SHADOWS-BUILTIN", Lint, "A variable name collides with a reserved operator or keyword."),
    PlaintextKey => ("L-PLAINTEXT-KEY", Lint, "A sent message exposes key material outside any encryption."),
    NoHerald => ("L-NO-HERALD", Lint, "The unit defines protocols but has no herald."),
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Code {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Code {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Code::from_str_code(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown diagnostic code {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: Code,
    pub message: String,
    pub span: SourceSpan,
}

impl Diagnostic {
    pub fn new(code: Code, span: SourceSpan, message: impl Into<String>) -> Self {
        Self {
            severity: code.severity(),
            code,
            message: message.into(),
            span,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {}[{}]: {}",
            self.span, self.severity, self.code, self.message
        )
    }
}

/// Orders diagnostics by span, then code string, then message.
pub fn sort_diagnostics(diags: &mut [Diagnostic]) {
    diags.sort_by(|a, b| {
        (a.span.start_byte, a.span.end_byte, a.code.as_str(), &a.message).cmp(&(
            b.span.start_byte,
            b.span.end_byte,
            b.code.as_str(),
            &b.message,
        ))
    });
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub errors: usize,
    pub warnings: usize,
    pub lints: usize,
}

impl Tally {
    pub fn of(diags: &[Diagnostic]) -> Self {
        let mut t = Tally::default();
        for d in diags {
            match d.severity {
                Severity::Error => t.errors += 1,
                Severity::Warning => t.warnings += 1,
                Severity::Lint => t.lints += 1,
            }
        }
        t
    }
}

impl fmt::Display for Tally {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let plural = |n: usize, w: &str| {
            if n == 1 {
                format!("{n} {w}")
            } else {
                format!("{n} {w}s")
            }
        };
        write!(
            f,
            "{}, {}, {}",
            plural(self.errors, "error"),
            plural(self.warnings, "warning"),
            plural(self.lints, "lint")
        )
    }
}

/// Renders the code registry as a markdown table.
pub fn registry_markdown() -> String {
    let mut out = String::from("# Diagnostic codes\n\n");
    out.push_str("Generated by `protoforge diagnostics`. Do not edit by hand.\n\n");
    out.push_str("| Code | Severity | Meaning |\n|---|---|---|\n");
    for code in Code::ALL {
        out.push_str(&format!(
            "| `{}` | {} | {} |\n",
            code.as_str(),
            code.severity(),
            code.description().replace('|', "\\|")
        ));
    }
    out
}
