//! Seeded random generators for property tests: s-expression trees and
//! structurally valid CPSA units.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cpsa::{
    CpsaUnit, Direction, Event, Herald, Protocol, Role, Skeleton, Sort, Strand, Term, UnitItem,
    Vars,
};
use crate::diag::SourceSpan;
use crate::sexpr::SExpr;

const SYMBOL_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_+*/<>=!?:.'";
const STRING_CHARS: &[char] = &['a', 'z', ' ', '"', '\\', '(', ')', ';', '\n', 'é', '→', '\t'];

pub fn random_symbol(rng: &mut impl Rng) -> String {
    loop {
        let len = rng.gen_range(1..8);
        let s: String = (0..len)
            .map(|_| *SYMBOL_CHARS.choose(rng).expect("nonempty") as char)
            .collect();
        if crate::sexpr::is_valid_symbol(&s) {
            return s;
        }
    }
}

pub fn random_string(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(0..10);
    (0..len).map(|_| *STRING_CHARS.choose(rng).expect("nonempty")).collect()
}

fn random_atom(rng: &mut impl Rng) -> SExpr {
    match rng.gen_range(0..3) {
        0 => SExpr::symbol(random_symbol(rng)),
        1 => SExpr::string(random_string(rng)),
        _ => SExpr::integer(rng.gen_range(-100_000..100_000)),
    }
}

/// A random tree whose list nesting does not exceed `max_depth`.
pub fn random_sexpr(rng: &mut impl Rng, max_depth: usize) -> SExpr {
    if max_depth == 0 || rng.gen_bool(0.3) {
        return random_atom(rng);
    }
    let len = rng.gen_range(0..5);
    SExpr::list((0..len).map(|_| random_sexpr(rng, max_depth - 1)).collect())
}

/// A random list (never an atom) of depth at most `max_depth`.
pub fn random_list(rng: &mut impl Rng, max_depth: usize) -> SExpr {
    let len = rng.gen_range(0..5);
    SExpr::list(
        (0..len)
            .map(|_| random_sexpr(rng, max_depth.saturating_sub(1)))
            .collect(),
    )
}

const IDENTS: &[&str] = &[
    "a", "b", "c", "n", "n1", "n2", "k", "s", "d", "x", "y", "m", "t", "na", "nb", "key",
    "alice", "bob", "srv", "tag-1", "pubk", "cat",
];
const ROLE_NAMES: &[&str] = &["init", "resp", "server", "client", "ttp", "agent"];
const PROTOCOL_NAMES: &[&str] = &["p", "ns", "nsl", "blanchet", "yahalom", "or", "wmf"];

fn pick<'a>(rng: &mut impl Rng, pool: &[&'a str], n: usize) -> Vec<&'a str> {
    let mut v = pool.to_vec();
    v.shuffle(rng);
    v.truncate(n);
    v
}

fn random_vars(rng: &mut impl Rng) -> Vars {
    let n = rng.gen_range(1..6);
    let mut vars = Vars::new();
    for name in pick(rng, IDENTS, n) {
        vars.insert(name, *Sort::ALL.choose(rng).expect("nonempty"), SourceSpan::synthetic());
    }
    vars
}

/// A term over `names` whose nesting stays under `depth` operators.
pub fn random_term(rng: &mut impl Rng, names: &[String], depth: usize) -> Term {
    if depth == 0 || rng.gen_bool(0.35) {
        return if rng.gen_bool(0.9) {
            Term::Var(names.choose(rng).expect("names").clone())
        } else {
            Term::Tag(format!("tag{}", rng.gen_range(0..5)))
        };
    }
    let d = depth - 1;
    match rng.gen_range(0..6) {
        0 => Term::PubKeyOf(Box::new(random_term(rng, names, d))),
        1 => Term::InvKeyOf(Box::new(random_term(rng, names, d))),
        2 => Term::LongTermKey(
            Box::new(random_term(rng, names, d)),
            Box::new(random_term(rng, names, d)),
        ),
        3 => Term::Cat((0..rng.gen_range(2..4)).map(|_| random_term(rng, names, d)).collect()),
        4 => Term::Enc(
            Box::new(random_term(rng, names, d)),
            Box::new(random_term(rng, names, d)),
        ),
        _ => Term::Hash(Box::new(random_term(rng, names, d))),
    }
}

fn random_terms(rng: &mut impl Rng, names: &[String], max: usize) -> Vec<Term> {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| random_term(rng, names, 2)).collect()
}

fn names_of(vars: &Vars) -> Vec<String> {
    vars.iter().map(|d| d.name.clone()).collect()
}

fn random_role(rng: &mut impl Rng, name: &str) -> Role {
    let vars = random_vars(rng);
    let names = names_of(&vars);
    let len = rng.gen_range(1..5);
    let trace = (0..len)
        .map(|_| Event {
            direction: if rng.gen_bool(0.5) {
                Direction::Send
            } else {
                Direction::Recv
            },
            message: random_term(rng, &names, 3),
            span: SourceSpan::synthetic(),
        })
        .collect();
    Role {
        name: name.to_string(),
        trace,
        uniq_orig: random_terms(rng, &names, 2),
        non_orig: random_terms(rng, &names, 2),
        vars,
        span: SourceSpan::synthetic(),
    }
}

fn random_skeleton(rng: &mut impl Rng, p: &Protocol) -> Skeleton {
    let vars = random_vars(rng);
    let names = names_of(&vars);
    let strands = (0..rng.gen_range(0..3))
        .map(|_| {
            let role = p.roles.choose(rng).expect("roles");
            let role_vars = names_of(&role.vars);
            let nb = rng.gen_range(0..=role_vars.len());
            let bindings = pick(
                rng,
                &role_vars.iter().map(String::as_str).collect::<Vec<_>>(),
                nb,
            )
            .into_iter()
            .map(|v| (v.to_string(), random_term(rng, &names, 1)))
            .collect();
            Strand {
                role: role.name.clone(),
                height: rng.gen_range(1..6),
                bindings,
                span: SourceSpan::synthetic(),
            }
        })
        .collect();
    Skeleton {
        protocol: p.name.clone(),
        strands,
        listeners: random_terms(rng, &names, 2),
        non_orig: random_terms(rng, &names, 2),
        uniq_orig: random_terms(rng, &names, 1),
        vars,
        span: SourceSpan::synthetic(),
    }
}

/// A unit that lowers without errors. Skeletons follow their protocol, which
/// is the order canonical formatting uses.
pub fn random_unit(rng: &mut impl Rng) -> CpsaUnit {
    let mut unit = CpsaUnit::default();
    if rng.gen_bool(0.7) {
        unit.herald = Some(Herald {
            title: random_string(rng),
            span: SourceSpan::synthetic(),
        });
        unit.source_order.push(UnitItem::Herald);
    }
    let np = rng.gen_range(1..3);
    for pname in pick(rng, PROTOCOL_NAMES, np) {
        let nr = rng.gen_range(1..4);
        let roles = pick(rng, ROLE_NAMES, nr)
            .into_iter()
            .map(|r| random_role(rng, r))
            .collect();
        let p = Protocol {
            name: pname.to_string(),
            algebra: "basic".into(),
            roles,
            span: SourceSpan::synthetic(),
        };
        unit.source_order.push(UnitItem::Protocol(unit.protocols.len()));
        for _ in 0..rng.gen_range(0..3) {
            unit.source_order.push(UnitItem::Skeleton(unit.skeletons.len()));
            unit.skeletons.push(random_skeleton(rng, &p));
        }
        unit.protocols.push(p);
    }
    if rng.gen_bool(0.2) {
        let mut items = vec![SExpr::symbol("defgoal")];
        if let Some(list) = random_list(rng, 4).as_list() {
            items.extend(list.iter().cloned());
        }
        unit.source_order.push(UnitItem::Opaque(unit.opaque.len()));
        unit.opaque.push(SExpr::list(items));
    }
    unit
}
