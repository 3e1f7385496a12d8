use super::{SExpr, SExprKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrintStyle {
    Compact,
    /// Break lists that do not fit in `width` columns, nesting by two spaces.
    Indented(usize),
}

pub fn print(form: &SExpr, style: PrintStyle) -> String {
    let mut out = String::new();
    match style {
        PrintStyle::Compact => write_compact(form, &mut out),
        PrintStyle::Indented(width) => write_indented(form, 0, width, &mut out),
    }
    out
}

pub(crate) fn quote_string(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        if matches!(c, '"' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
}

fn write_atom(kind: &SExprKind, out: &mut String) {
    match kind {
        SExprKind::Symbol(s) => out.push_str(s),
        SExprKind::StringLit(s) => quote_string(s, out),
        SExprKind::Integer(v) => out.push_str(&v.to_string()),
        SExprKind::List(_) => unreachable!("lists are not atoms"),
    }
}

fn write_compact(form: &SExpr, out: &mut String) {
    match &form.kind {
        SExprKind::List(items) => {
            out.push('(');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write_compact(item, out);
            }
            out.push(')');
        }
        atom => write_atom(atom, out),
    }
}

fn fits(form: &SExpr, column: usize, width: usize) -> Option<String> {
    let mut s = String::new();
    write_compact(form, &mut s);
    (!s.contains('\n') && column + s.chars().count() <= width).then_some(s)
}

fn newline(indent: usize, out: &mut String) {
    out.push('\n');
    out.extend(std::iter::repeat_n(' ', indent));
}

fn write_indented(form: &SExpr, indent: usize, width: usize, out: &mut String) {
    let items = match &form.kind {
        SExprKind::List(items) if !items.is_empty() => items,
        _ => return write_compact(form, out),
    };
    if let Some(s) = fits(form, indent, width) {
        out.push_str(&s);
        return;
    }
    out.push('(');
    let mut rest = items.iter().peekable();
    let head = rest.next().expect("nonempty");
    write_indented(head, indent + 1, width, out);
    if !head.is_list() {
        // keep the atoms that follow a head symbol on its line: `(defrole init`
        while let Some(next) = rest.peek() {
            if next.is_list() {
                break;
            }
            out.push(' ');
            write_compact(next, out);
            rest.next();
        }
    }
    for item in rest {
        newline(indent + 2, out);
        write_indented(item, indent + 2, width, out);
    }
    out.push(')');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::parse;

    #[test]
    fn compact_single() {
        let form = SExpr::list(vec![SExpr::symbol("a")]);
        assert_eq!(print(&form, PrintStyle::Compact), "(a)");
    }

    #[test]
    fn escapes_quotes() {
        let form = SExpr::string("x\"y");
        let text = print(&form, PrintStyle::Compact);
        assert_eq!(text, r#""x\"y""#);
        let back = parse(&text);
        assert_eq!(back.forms[0], form);
    }

    #[test]
    fn indented_breaks_long_lists() {
        let text = "(defrole init (vars (a b akey) (s skey)) (trace (send (enc s b)) (recv s)))";
        let form = &parse(text).forms[0];
        let out = print(form, PrintStyle::Indented(30));
        assert_eq!(
            out,
            "(defrole init\n  (vars (a b akey) (s skey))\n  (trace\n    (send (enc s b))\n    (recv s)))"
        );
        assert_eq!(&parse(&out).forms[0], form);
    }
}
