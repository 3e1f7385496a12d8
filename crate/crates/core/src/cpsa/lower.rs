use crate::diag::{Code, Diagnostic};
use crate::sexpr::{SExpr, SExprKind};

use super::{
    CpsaUnit, Direction, Event, Herald, Protocol, Role, Skeleton, Sort, Strand, Term, UnitItem,
    Vars,
};

struct Lowerer {
    diags: Vec<Diagnostic>,
}

impl Lowerer {
    fn err(&mut self, code: Code, node: &SExpr, message: impl Into<String>) {
        self.diags.push(Diagnostic::new(code, node.span, message));
    }

    fn symbol<'a>(&mut self, node: Option<&'a SExpr>, parent: &SExpr, what: &str) -> Option<&'a str> {
        match node {
            Some(n) => match n.as_symbol() {
                Some(s) => Some(s),
                None => {
                    self.err(Code::Malformed, n, format!("expected a symbol for {what}"));
                    None
                }
            },
            None => {
                self.err(Code::BadArity, parent, format!("missing {what}"));
                None
            }
        }
    }

    fn term(&mut self, node: &SExpr) -> Option<Term> {
        let items = match &node.kind {
            SExprKind::Symbol(s) => return Some(Term::Var(s.clone())),
            SExprKind::StringLit(s) => return Some(Term::Tag(s.clone())),
            SExprKind::Integer(_) => {
                self.err(Code::Malformed, node, "an integer is not a message term");
                return None;
            }
            SExprKind::List(items) => items,
        };
        let Some(head) = items.first() else {
            self.err(Code::Malformed, node, "empty list is not a message term");
            return None;
        };
        let Some(op) = head.as_symbol() else {
            self.err(Code::Malformed, head, "operator position must hold a symbol");
            return None;
        };
        let args = &items[1..];
        let arity_ok = match op {
            "pubk" | "privk" | "invk" => args.len() == 1,
            "ltk" => args.len() == 2,
            "cat" | "enc" => args.len() >= 2,
            "hash" => !args.is_empty(),
            _ => {
                self.err(Code::UnknownForm, head, format!("unknown operator `{op}`"));
                return None;
            }
        };
        if !arity_ok {
            self.err(
                Code::BadArity,
                node,
                format!("`{op}` does not take {} argument(s)", args.len()),
            );
            return None;
        }
        let mut lowered = Vec::with_capacity(args.len());
        for a in args {
            lowered.push(self.term(a));
        }
        let mut lowered: Vec<Term> = lowered.into_iter().collect::<Option<_>>()?;
        let b = Box::new;
        Some(match op {
            "pubk" => Term::PubKeyOf(b(lowered.remove(0))),
            "privk" => Term::InvKeyOf(b(Term::PubKeyOf(b(lowered.remove(0))))),
            "invk" => Term::InvKeyOf(b(lowered.remove(0))),
            "ltk" => {
                let second = lowered.pop().expect("arity");
                Term::LongTermKey(b(lowered.remove(0)), b(second))
            }
            "cat" => Term::Cat(lowered),
            "enc" => {
                let key = lowered.pop().expect("arity");
                let payload = if lowered.len() == 1 {
                    lowered.remove(0)
                } else {
                    Term::Cat(lowered)
                };
                Term::Enc(b(payload), b(key))
            }
            "hash" => {
                if lowered.len() == 1 {
                    Term::Hash(b(lowered.remove(0)))
                } else {
                    Term::Hash(b(Term::Cat(lowered)))
                }
            }
            _ => unreachable!(),
        })
    }

    fn terms(&mut self, nodes: &[SExpr]) -> Vec<Term> {
        nodes.iter().filter_map(|n| self.term(n)).collect()
    }

    fn vars(&mut self, clause: &SExpr, into: &mut Vars) {
        for group in &clause.as_list().expect("clause is a list")[1..] {
            let Some(items) = group.as_list() else {
                self.err(Code::Malformed, group, "a vars entry must be a list like (a b name)");
                continue;
            };
            if items.len() < 2 {
                self.err(Code::BadArity, group, "a vars entry needs variables and a sort");
                continue;
            }
            let sort_node = items.last().expect("len >= 2");
            let sort = match sort_node.as_symbol().map(str::parse::<Sort>) {
                Some(Ok(sort)) => sort,
                _ => {
                    self.err(
                        Code::BadSort,
                        sort_node,
                        format!(
                            "unknown sort `{}`",
                            crate::sexpr::print(sort_node, crate::sexpr::PrintStyle::Compact)
                        ),
                    );
                    continue;
                }
            };
            for name_node in &items[..items.len() - 1] {
                let Some(name) = name_node.as_symbol() else {
                    self.err(Code::Malformed, name_node, "variable names must be symbols");
                    continue;
                };
                if !into.insert(name, sort, name_node.span) {
                    self.err(
                        Code::DuplicateVar,
                        name_node,
                        format!("variable `{name}` is declared more than once"),
                    );
                }
            }
        }
    }

    fn role(&mut self, node: &SExpr) -> Option<Role> {
        let items = node.as_list().expect("defrole is a list");
        let name = self.symbol(items.get(1), node, "role name")?.to_string();
        let mut role = Role {
            name,
            vars: Vars::new(),
            trace: Vec::new(),
            uniq_orig: Vec::new(),
            non_orig: Vec::new(),
            span: node.span,
        };
        for clause in &items[2..] {
            match clause.head() {
                Some("vars") => self.vars(clause, &mut role.vars),
                Some("trace") => {
                    for ev in &clause.as_list().expect("list")[1..] {
                        if let Some(e) = self.event(ev) {
                            role.trace.push(e);
                        }
                    }
                }
                Some("uniq-orig") => {
                    let t = self.terms(&clause.as_list().expect("list")[1..]);
                    role.uniq_orig.extend(t);
                }
                Some("non-orig") => {
                    let t = self.terms(&clause.as_list().expect("list")[1..]);
                    role.non_orig.extend(t);
                }
                Some(other) => {
                    self.err(Code::UnknownForm, clause, format!("unknown role clause `{other}`"))
                }
                None => self.err(Code::Malformed, clause, "expected a role clause"),
            }
        }
        Some(role)
    }

    fn event(&mut self, node: &SExpr) -> Option<Event> {
        let direction = match node.head() {
            Some("send") => Direction::Send,
            Some("recv") => Direction::Recv,
            Some(other) => {
                self.err(Code::UnknownForm, node, format!("unknown trace event `{other}`"));
                return None;
            }
            None => {
                self.err(Code::Malformed, node, "expected (send ...) or (recv ...)");
                return None;
            }
        };
        let items = node.as_list().expect("list");
        if items.len() != 2 {
            self.err(
                Code::BadArity,
                node,
                format!("`{}` takes exactly one message", direction.as_str()),
            );
            return None;
        }
        Some(Event {
            direction,
            message: self.term(&items[1])?,
            span: node.span,
        })
    }

    fn protocol(&mut self, node: &SExpr) -> Option<Protocol> {
        let items = node.as_list().expect("list");
        let name = self.symbol(items.get(1), node, "protocol name")?.to_string();
        let algebra = self.symbol(items.get(2), node, "algebra name")?.to_string();
        let mut protocol = Protocol {
            name,
            algebra,
            roles: Vec::new(),
            span: node.span,
        };
        for child in &items[3..] {
            match child.head() {
                Some("defrole") => {
                    if let Some(role) = self.role(child) {
                        if protocol.role(&role.name).is_some() {
                            self.err(
                                Code::DuplicateRole,
                                child,
                                format!("role `{}` is defined twice", role.name),
                            );
                        } else {
                            protocol.roles.push(role);
                        }
                    }
                }
                Some(other) => self.err(
                    Code::UnknownForm,
                    child,
                    format!("unknown protocol clause `{other}`"),
                ),
                None => self.err(Code::Malformed, child, "expected a (defrole ...) form"),
            }
        }
        if protocol.roles.is_empty() {
            self.err(Code::BadArity, node, "protocol defines no roles");
        }
        Some(protocol)
    }

    fn strand(&mut self, node: &SExpr) -> Option<Strand> {
        let items = node.as_list().expect("list");
        let role = self.symbol(items.get(1), node, "strand role")?.to_string();
        let height = match items.get(2).map(|n| &n.kind) {
            Some(SExprKind::Integer(h)) if *h >= 1 && *h <= u32::MAX as i64 => *h as u32,
            Some(_) => {
                self.err(Code::BadHeight, &items[2], "strand height must be a positive integer");
                return None;
            }
            None => {
                self.err(Code::BadArity, node, "missing strand height");
                return None;
            }
        };
        let mut bindings = Vec::new();
        for b in &items[3..] {
            match b.as_list() {
                Some([lhs, rhs]) => {
                    let Some(var) = lhs.as_symbol() else {
                        self.err(Code::Malformed, lhs, "binding must name a role variable");
                        continue;
                    };
                    if let Some(t) = self.term(rhs) {
                        bindings.push((var.to_string(), t));
                    }
                }
                Some(_) => self.err(Code::BadArity, b, "a binding has the form (var term)"),
                None => self.err(Code::Malformed, b, "a binding has the form (var term)"),
            }
        }
        Some(Strand {
            role,
            height,
            bindings,
            span: node.span,
        })
    }

    fn skeleton(&mut self, node: &SExpr) -> Option<Skeleton> {
        let items = node.as_list().expect("list");
        let protocol = self.symbol(items.get(1), node, "protocol name")?.to_string();
        let mut sk = Skeleton {
            protocol,
            vars: Vars::new(),
            strands: Vec::new(),
            listeners: Vec::new(),
            non_orig: Vec::new(),
            uniq_orig: Vec::new(),
            span: node.span,
        };
        for clause in &items[2..] {
            let args = clause.as_list().and_then(|l| l.get(1..)).unwrap_or(&[]);
            match clause.head() {
                Some("vars") => self.vars(clause, &mut sk.vars),
                Some("defstrand") => sk.strands.extend(self.strand(clause)),
                Some("deflistener") => {
                    if args.len() != 1 {
                        self.err(Code::BadArity, clause, "deflistener takes exactly one term");
                    } else {
                        sk.listeners.extend(self.term(&args[0]));
                    }
                }
                Some("non-orig") => {
                    let t = self.terms(args);
                    sk.non_orig.extend(t);
                }
                Some("uniq-orig") => {
                    let t = self.terms(args);
                    sk.uniq_orig.extend(t);
                }
                Some(other) => self.err(
                    Code::UnknownForm,
                    clause,
                    format!("unknown skeleton clause `{other}`"),
                ),
                None => self.err(Code::Malformed, clause, "expected a skeleton clause"),
            }
        }
        Some(sk)
    }
}

/// Lowers a single message term.
pub fn lower_term(node: &SExpr) -> (Option<Term>, Vec<Diagnostic>) {
    let mut l = Lowerer { diags: Vec::new() };
    let t = l.term(node);
    (t, l.diags)
}

/// Lowers top-level forms into a unit. Always returns a unit; constructs
/// that cannot be lowered are dropped with a diagnostic, and unsupported
/// top-level forms are kept verbatim in `opaque`.
pub fn lower(forms: &[SExpr]) -> (CpsaUnit, Vec<Diagnostic>) {
    let mut l = Lowerer { diags: Vec::new() };
    let mut unit = CpsaUnit::default();
    for form in forms {
        let keep_opaque = |l: &mut Lowerer, unit: &mut CpsaUnit, why: String| {
            l.err(Code::UnsupportedForm, form, why);
            unit.source_order.push(UnitItem::Opaque(unit.opaque.len()));
            unit.opaque.push(form.clone());
        };
        match form.head() {
            Some("herald") => {
                let items = form.as_list().expect("list");
                let title = match items.get(1).map(|n| &n.kind) {
                    Some(SExprKind::StringLit(s) | SExprKind::Symbol(s)) => s.clone(),
                    Some(_) => {
                        l.err(Code::Malformed, &items[1], "herald title must be a string");
                        continue;
                    }
                    None => {
                        l.err(Code::BadArity, form, "herald needs a title");
                        continue;
                    }
                };
                if unit.herald.is_some() {
                    l.err(Code::DuplicateHerald, form, "only the first herald is kept");
                } else {
                    unit.herald = Some(Herald {
                        title,
                        span: form.span,
                    });
                    unit.source_order.push(UnitItem::Herald);
                }
            }
            Some("defprotocol") => {
                let items = form.as_list().expect("list");
                match items.get(2).and_then(SExpr::as_symbol) {
                    Some(alg) if alg != "basic" => {
                        keep_opaque(&mut l, &mut unit, format!("algebra `{alg}` is not analyzed"));
                        continue;
                    }
                    _ => {}
                }
                if let Some(p) = l.protocol(form) {
                    unit.source_order.push(UnitItem::Protocol(unit.protocols.len()));
                    unit.protocols.push(p);
                }
            }
            Some("defskeleton") => {
                if let Some(s) = l.skeleton(form) {
                    unit.source_order.push(UnitItem::Skeleton(unit.skeletons.len()));
                    unit.skeletons.push(s);
                }
            }
            Some(other) => {
                let why = format!("top-level form `{other}` is kept but not analyzed");
                keep_opaque(&mut l, &mut unit, why);
            }
            None => keep_opaque(&mut l, &mut unit, "top-level item is not a definition".into()),
        }
    }
    (unit, l.diags)
}
