use crate::diag::{sort_diagnostics, Code, Diagnostic, SourceSpan};

use super::{looks_like_integer, SExpr, SExprKind};

/// Lists nested deeper than this are rejected.
pub const MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub forms: Vec<SExpr>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseOutcome {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(Diagnostic::is_error)
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn mark(&self) -> (usize, usize, usize) {
        (self.pos, self.line, self.column)
    }

    fn span_from(&self, mark: (usize, usize, usize)) -> SourceSpan {
        SourceSpan::new(mark.0, self.pos, mark.1, mark.2)
    }
}

struct Frame {
    open: SourceSpan,
    children: Vec<SExpr>,
}

fn emit(stack: &mut [Frame], forms: &mut Vec<SExpr>, poisoned: bool, node: SExpr) {
    if poisoned {
        return;
    }
    match stack.last_mut() {
        Some(frame) => frame.children.push(node),
        None => forms.push(node),
    }
}

fn is_delimiter(c: char) -> bool {
    c.is_whitespace() || c.is_control() || matches!(c, '(' | ')' | '"' | ';')
}

/// Reads every complete top-level form in `text`.
///
/// Forms that are still open at end of input, or that nest too deeply, are
/// dropped; each offending delimiter gets its own diagnostic.
pub fn parse(text: &str) -> ParseOutcome {
    let mut cur = Cursor {
        text,
        pos: 0,
        line: 1,
        column: 1,
    };
    let mut forms = Vec::new();
    let mut diagnostics = Vec::new();
    let mut stack: Vec<Frame> = Vec::new();
    // set when the current top-level form exceeded MAX_DEPTH
    let mut poisoned = false;


    while let Some(c) = cur.peek() {
        let mark = cur.mark();
        match c {
            c if c.is_whitespace() => {
                cur.bump();
            }
            ';' => {
                while let Some(c) = cur.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '(' => {
                cur.bump();
                let open = cur.span_from(mark);
                if stack.len() >= MAX_DEPTH && !poisoned {
                    poisoned = true;
                    diagnostics.push(Diagnostic::new(
                        Code::NestingTooDeep,
                        open,
                        format!("lists nest deeper than {MAX_DEPTH} levels"),
                    ));
                }
                stack.push(Frame {
                    open,
                    children: Vec::new(),
                });
            }
            ')' => {
                cur.bump();
                let close = cur.span_from(mark);
                match stack.pop() {
                    Some(frame) => {
                        let span = SourceSpan::new(
                            frame.open.start_byte,
                            close.end_byte,
                            frame.open.line,
                            frame.open.column,
                        );
                        let node = SExpr::new(SExprKind::List(frame.children), span);
                        emit(&mut stack, &mut forms, poisoned, node);
                        if stack.is_empty() {
                            poisoned = false;
                        }
                    }
                    None => diagnostics.push(Diagnostic::new(
                        Code::UnbalancedClose,
                        close,
                        "unexpected `)` with no matching `(`",
                    )),
                }
            }
            '"' => {
                cur.bump();
                let quote = cur.span_from(mark);
                let mut value = String::new();
                let mut closed = false;
                while let Some(c) = cur.bump() {
                    match c {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => match cur.peek() {
                            Some(e @ ('"' | '\\')) => {
                                cur.bump();
                                value.push(e);
                            }
                            _ => value.push('\\'),
                        },
                        c => value.push(c),
                    }
                }
                if closed {
                    let node = SExpr::new(SExprKind::StringLit(value), cur.span_from(mark));
                    emit(&mut stack, &mut forms, poisoned, node);
                } else {
                    diagnostics.push(Diagnostic::new(
                        Code::UnterminatedString,
                        quote,
                        "string literal is never closed",
                    ));
                }
            }
            c if c.is_control() => {
                cur.bump();
                diagnostics.push(Diagnostic::new(
                    Code::InvalidCharacter,
                    cur.span_from(mark),
                    format!("invalid character U+{:04X}", c as u32),
                ));
            }
            _ => {
                while let Some(c) = cur.peek() {
                    if is_delimiter(c) {
                        break;
                    }
                    cur.bump();
                }
                let span = cur.span_from(mark);
                let token = &text[span.start_byte..span.end_byte];
                let kind = if looks_like_integer(token) {
                    SExprKind::Integer(token.parse().expect("checked integer"))
                } else {
                    SExprKind::Symbol(token.to_string())
                };
                emit(&mut stack, &mut forms, poisoned, SExpr::new(kind, span));
            }
        }
    }

    for frame in stack {
        diagnostics.push(Diagnostic::new(
            Code::UnbalancedOpen,
            frame.open,
            "`(` is never closed",
        ));
    }
    sort_diagnostics(&mut diagnostics);
    ParseOutcome { forms, diagnostics }
}
