use std::collections::BTreeSet;

use crate::diag::{sort_diagnostics, Code, Diagnostic, SourceSpan};

use super::{CpsaUnit, Protocol, Role, Skeleton, Sort, Term, Vars};

fn undeclared<'a>(
    uses: impl IntoIterator<Item = (&'a str, SourceSpan)>,
    vars: &Vars,
    owner: &str,
    out: &mut Vec<Diagnostic>,
) {
    let mut reported = BTreeSet::new();
    for (v, span) in uses {
        if !vars.contains(v) && reported.insert(v) {
            out.push(Diagnostic::new(
                Code::UndeclaredVar,
                span,
                format!("variable `{v}` is not declared in {owner}"),
            ));
        }
    }
}

fn check_key_sorts(term: &Term, vars: &Vars, span: SourceSpan, out: &mut Vec<Diagnostic>) {
    term.walk(&mut |t| match t {
        Term::InvKeyOf(inner) => match inner.sort(vars) {
            Some(Sort::Akey | Sort::Mesg) | None => {}
            Some(other) => out.push(Diagnostic::new(
                Code::InvkSort,
                span,
                format!("`(invk {inner})` applies to sort {other}; expected akey"),
            )),
        },
        Term::Enc(_, key) => {
            if let Some(s @ (Sort::Text | Sort::Data)) = key.sort(vars) {
                out.push(Diagnostic::new(
                    Code::WeakKeySort,
                    span,
                    format!("encryption key `{key}` has sort {s}"),
                ));
            }
        }
        _ => {}
    });
}

fn validate_role(role: &Role, out: &mut Vec<Diagnostic>) {
    let owner = format!("role `{}`", role.name);
    if role.trace.is_empty() {
        out.push(Diagnostic::new(
            Code::EmptyTrace,
            role.span,
            format!("{owner} has an empty trace"),
        ));
    }
    let uses = role.variable_uses();
    undeclared(uses.iter().copied(), &role.vars, &owner, out);

    for ev in &role.trace {
        check_key_sorts(&ev.message, &role.vars, ev.span, out);
    }
    for t in role.uniq_orig.iter().chain(&role.non_orig) {
        check_key_sorts(t, &role.vars, role.span, out);
    }

    for t in &role.uniq_orig {
        if !role.trace.iter().any(|ev| ev.message.carries(t)) {
            out.push(Diagnostic::new(
                Code::OrigNotCarried,
                role.span,
                format!("uniq-orig `{t}` is never carried in the trace of {owner}"),
            ));
        }
    }

    let used: BTreeSet<&str> = uses.iter().map(|(v, _)| *v).collect();
    for decl in role.vars.iter() {
        if !used.contains(decl.name.as_str()) {
            out.push(Diagnostic::new(
                Code::UnusedVar,
                decl.span,
                format!("variable `{}` of {owner} is never used", decl.name),
            ));
        }
    }
}

/// Well-formedness findings for one protocol, ordered by span then code.
pub fn validate_protocol(p: &Protocol) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for role in &p.roles {
        validate_role(role, &mut out);
    }
    sort_diagnostics(&mut out);
    out
}

/// Checks a skeleton against the protocols of `unit`.
pub fn validate_skeleton(s: &Skeleton, unit: &CpsaUnit) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let owner = format!("skeleton of `{}`", s.protocol);
    let uses = s
        .terms()
        .into_iter()
        .flat_map(|(t, span)| t.variables().into_iter().map(move |v| (v, span)));
    undeclared(uses, &s.vars, &owner, &mut out);

    match unit.protocol(&s.protocol) {
        None => out.push(Diagnostic::new(
            Code::NoSuchProtocol,
            s.span,
            format!("protocol `{}` is not defined", s.protocol),
        )),
        Some(p) => {
            for strand in &s.strands {
                let Some(role) = p.role(&strand.role) else {
                    out.push(Diagnostic::new(
                        Code::NoSuchRole,
                        strand.span,
                        format!("protocol `{}` has no role `{}`", p.name, strand.role),
                    ));
                    continue;
                };
                if strand.height as usize > role.trace.len() {
                    out.push(Diagnostic::new(
                        Code::HeightExceedsTrace,
                        strand.span,
                        format!(
                            "height {} exceeds the {} events of role `{}`",
                            strand.height,
                            role.trace.len(),
                            role.name
                        ),
                    ));
                }
                for (var, _) in &strand.bindings {
                    if !role.vars.contains(var) {
                        out.push(Diagnostic::new(
                            Code::BadBinding,
                            strand.span,
                            format!("`{var}` is not a variable of role `{}`", role.name),
                        ));
                    }
                }
            }
        }
    }
    sort_diagnostics(&mut out);
    out
}

/// Validates every protocol and skeleton of the unit.
pub fn validate_unit(unit: &CpsaUnit) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = unit.protocols.iter().flat_map(validate_protocol).collect();
    out.extend(unit.skeletons.iter().flat_map(|s| validate_skeleton(s, unit)));
    sort_diagnostics(&mut out);
    out
}
