use crate::diag::{sort_diagnostics, Code, Diagnostic};

use super::{CpsaUnit, Direction, Term, VarDecl, Vars};

/// Operator and keyword names a variable should never be given.
pub const RESERVED_WORDS: &[&str] = &[
    "pubk", "privk", "invk", "ltk", "cat", "enc", "hash", "send", "recv", "trace", "vars",
];

fn shadowing<'a>(decls: impl Iterator<Item = &'a VarDecl>, out: &mut Vec<Diagnostic>) {
    for d in decls {
        if RESERVED_WORDS.contains(&d.name.as_str()) {
            out.push(Diagnostic::new(
                Code::ShadowsBuiltin,
                d.span,
                format!(
                    "variable `{}` ({}) shadows the reserved word `{}`",
                    d.name, d.sort, d.name
                ),
            ));
        }
    }
}

/// Key material visible in a sent message: reached without passing through
/// an encryption or a hash.
fn exposed_keys<'a>(term: &'a Term, vars: &Vars, out: &mut Vec<&'a Term>) {
    match term {
        Term::Var(_) => {
            if term.sort(vars).is_some_and(|s| s.is_key()) {
                out.push(term);
            }
        }
        Term::PubKeyOf(_) | Term::InvKeyOf(_) | Term::LongTermKey(..) => out.push(term),
        Term::Cat(parts) => parts.iter().for_each(|p| exposed_keys(p, vars, out)),
        Term::Enc(..) | Term::Hash(_) | Term::Tag(_) => {}
    }
}

/// Style and protocol-hygiene findings, ordered by span then code.
pub fn lint(unit: &CpsaUnit) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for role in unit.roles() {
        shadowing(role.vars.iter(), &mut out);
        for ev in role.trace.iter().filter(|e| e.direction == Direction::Send) {
            let mut keys = Vec::new();
            exposed_keys(&ev.message, &role.vars, &mut keys);
            for k in keys {
                out.push(Diagnostic::new(
                    Code::PlaintextKey,
                    ev.span,
                    format!("role `{}` sends key `{k}` in the clear", role.name),
                ));
            }
        }
    }
    for sk in &unit.skeletons {
        shadowing(sk.vars.iter(), &mut out);
    }
    if unit.herald.is_none() {
        if let Some(p) = unit.protocols.first() {
            out.push(Diagnostic::new(
                Code::NoHerald,
                p.span,
                "file defines a protocol but has no (herald ...) form",
            ));
        }
    }
    sort_diagnostics(&mut out);
    out
}
