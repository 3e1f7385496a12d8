use crate::sexpr::{self, PrintStyle, SExpr};

use super::{CpsaUnit, Protocol, Role, Skeleton, Term, Vars};

pub fn term_to_sexpr(term: &Term) -> SExpr {
    let op = |name: &str, args: Vec<&Term>| {
        let mut items = vec![SExpr::symbol(name)];
        items.extend(args.into_iter().map(term_to_sexpr));
        SExpr::list(items)
    };
    match term {
        Term::Var(v) => SExpr::symbol(v.as_str()),
        Term::Tag(s) => SExpr::string(s.as_str()),
        Term::PubKeyOf(t) => op("pubk", vec![t]),
        Term::InvKeyOf(t) => op("invk", vec![t]),
        Term::LongTermKey(a, b) => op("ltk", vec![a, b]),
        Term::Cat(parts) => op("cat", parts.iter().collect()),
        Term::Enc(p, k) => op("enc", vec![p, k]),
        Term::Hash(t) => op("hash", vec![t]),
    }
}

fn term(t: &Term) -> String {
    sexpr::print(&term_to_sexpr(t), PrintStyle::Compact)
}

fn vars_clause(vars: &Vars) -> String {
    let mut s = String::from("(vars");
    for (sort, names) in vars.grouped() {
        s.push_str(" (");
        s.push_str(&names.join(" "));
        s.push(' ');
        s.push_str(sort.as_str());
        s.push(')');
    }
    s.push(')');
    s
}

fn terms_clause(head: &str, terms: &[Term]) -> Option<String> {
    if terms.is_empty() {
        return None;
    }
    let body: Vec<String> = terms.iter().map(term).collect();
    Some(format!("({head} {})", body.join(" ")))
}

fn role(r: &Role, out: &mut String) {
    let pad = "    ";
    out.push_str(&format!("  (defrole {}\n", r.name));
    out.push_str(&format!("{pad}{}", vars_clause(&r.vars)));
    out.push_str(&format!("\n{pad}(trace"));
    // events line up under the first one, as in `(trace (send ...)`
    let align = " ".repeat(pad.len() + "(trace ".len());
    for (i, ev) in r.trace.iter().enumerate() {
        if i > 0 {
            out.push('\n');
            out.push_str(&align);
        } else {
            out.push(' ');
        }
        out.push_str(&format!("({} {})", ev.direction.as_str(), term(&ev.message)));
    }
    out.push(')');
    for clause in [
        terms_clause("non-orig", &r.non_orig),
        terms_clause("uniq-orig", &r.uniq_orig),
    ]
    .into_iter()
    .flatten()
    {
        out.push_str(&format!("\n{pad}{clause}"));
    }
    out.push(')');
}

fn protocol(p: &Protocol, out: &mut String) {
    out.push_str(&format!("(defprotocol {} {}", p.name, p.algebra));
    for r in &p.roles {
        out.push('\n');
        role(r, out);
    }
    out.push(')');
}

fn skeleton(s: &Skeleton, out: &mut String) {
    out.push_str(&format!("(defskeleton {}\n  {}", s.protocol, vars_clause(&s.vars)));
    for st in &s.strands {
        out.push_str(&format!("\n  (defstrand {} {}", st.role, st.height));
        for (v, t) in &st.bindings {
            out.push_str(&format!(" ({v} {})", term(t)));
        }
        out.push(')');
    }
    for l in &s.listeners {
        out.push_str(&format!("\n  (deflistener {})", term(l)));
    }
    for clause in [
        terms_clause("non-orig", &s.non_orig),
        terms_clause("uniq-orig", &s.uniq_orig),
    ]
    .into_iter()
    .flatten()
    {
        out.push_str(&format!("\n  {clause}"));
    }
    out.push(')');
}

/// Canonical text for a unit: herald, then each protocol followed by its
/// skeletons, then skeletons of unknown protocols, then kept opaque forms.
/// Forms are separated by a blank line.
pub fn format_unit(unit: &CpsaUnit) -> String {
    let mut blocks: Vec<String> = Vec::new();
    if let Some(h) = &unit.herald {
        let mut s = String::from("(herald ");
        crate::sexpr::quote_string(&h.title, &mut s);
        s.push(')');
        blocks.push(s);
    }
    let mut placed = vec![false; unit.skeletons.len()];
    for p in &unit.protocols {
        let mut s = String::new();
        protocol(p, &mut s);
        blocks.push(s);
        for (i, sk) in unit.skeletons.iter().enumerate() {
            if !placed[i] && sk.protocol == p.name {
                placed[i] = true;
                let mut s = String::new();
                skeleton(sk, &mut s);
                blocks.push(s);
            }
        }
    }
    for (i, sk) in unit.skeletons.iter().enumerate() {
        if !placed[i] {
            let mut s = String::new();
            skeleton(sk, &mut s);
            blocks.push(s);
        }
    }
    for form in &unit.opaque {
        blocks.push(sexpr::print(form, PrintStyle::Indented(72)));
    }
    let mut out = blocks.join("\n\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpsa::{lower, Sort};
    use crate::sexpr::parse;

    fn relower(text: &str) -> CpsaUnit {
        let p = parse(text);
        assert!(p.diagnostics.is_empty(), "{:?}", p.diagnostics);
        let (u, d) = lower(&p.forms);
        assert!(d.is_empty(), "{d:?}");
        u
    }

    #[test]
    fn vars_grouped_by_sort() {
        let v = Vars::from_pairs([("a", Sort::Akey), ("b", Sort::Akey), ("s", Sort::Skey)]);
        assert_eq!(vars_clause(&v), "(vars (a b akey) (s skey))");
    }

    #[test]
    fn minimal_is_stable() {
        let u = relower("(defprotocol p basic (defrole r (vars (x text)) (trace (send x))))");
        let a = format_unit(&u);
        assert_eq!(a, format_unit(&u));
        assert_eq!(a, "(defprotocol p basic\n  (defrole r\n    (vars (x text))\n    (trace (send x))))\n");
        assert_eq!(relower(&a), u);
    }

    #[test]
    fn orphan_skeletons_and_opaque_go_last() {
        let (u, _) = lower(
            &parse("(defskeleton q (vars)) (defgoal g) (defprotocol p basic (defrole r (vars) (trace (send \"t\")))) (herald \"H\")")
                .forms,
        );
        let text = format_unit(&u);
        let heads: Vec<_> = parse(&text)
            .forms
            .iter()
            .map(|f| f.head().unwrap().to_string())
            .collect();
        assert_eq!(heads, vec!["herald", "defprotocol", "defskeleton", "defgoal"]);
    }
}
