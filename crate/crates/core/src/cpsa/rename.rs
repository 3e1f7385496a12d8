use std::collections::BTreeMap;

use super::{CpsaUnit, Term, Vars};

/// A bijection on role and variable identifiers.
pub type Renaming = BTreeMap<String, String>;

fn name(map: &Renaming, s: &str) -> String {
    map.get(s).cloned().unwrap_or_else(|| s.to_string())
}

fn term(map: &Renaming, t: &Term) -> Term {
    let b = |t: &Term| Box::new(term(map, t));
    match t {
        Term::Var(v) => Term::Var(name(map, v)),
        Term::Tag(s) => Term::Tag(s.clone()),
        Term::PubKeyOf(x) => Term::PubKeyOf(b(x)),
        Term::InvKeyOf(x) => Term::InvKeyOf(b(x)),
        Term::LongTermKey(x, y) => Term::LongTermKey(b(x), b(y)),
        Term::Cat(parts) => Term::Cat(parts.iter().map(|p| term(map, p)).collect()),
        Term::Enc(p, k) => Term::Enc(b(p), b(k)),
        Term::Hash(x) => Term::Hash(b(x)),
    }
}

fn vars(map: &Renaming, v: &Vars) -> Vars {
    let mut out = v.clone();
    for d in out.iter_mut() {
        d.name = name(map, &d.name);
    }
    out
}

/// Applies `map` to every role name, variable declaration and variable
/// occurrence. Protocol names, sorts and tags are left alone.
pub fn rename_unit(unit: &CpsaUnit, map: &Renaming) -> CpsaUnit {
    let mut out = unit.clone();
    for p in &mut out.protocols {
        for r in &mut p.roles {
            r.name = name(map, &r.name);
            r.vars = vars(map, &r.vars);
            for ev in &mut r.trace {
                ev.message = term(map, &ev.message);
            }
            r.uniq_orig = r.uniq_orig.iter().map(|t| term(map, t)).collect();
            r.non_orig = r.non_orig.iter().map(|t| term(map, t)).collect();
        }
    }
    for s in &mut out.skeletons {
        s.vars = vars(map, &s.vars);
        for st in &mut s.strands {
            st.role = name(map, &st.role);
            st.bindings = st
                .bindings
                .iter()
                .map(|(v, t)| (name(map, v), term(map, t)))
                .collect();
        }
        s.listeners = s.listeners.iter().map(|t| term(map, t)).collect();
        s.non_orig = s.non_orig.iter().map(|t| term(map, t)).collect();
        s.uniq_orig = s.uniq_orig.iter().map(|t| term(map, t)).collect();
    }
    out
}
