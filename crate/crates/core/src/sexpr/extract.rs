use serde::{Deserialize, Serialize};

use super::parse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockOrigin {
    Fenced,
    RawScan,
}

/// A candidate region of model output that may hold s-expressions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub text: String,
    pub origin: BlockOrigin,
}

/// Pulls s-expression candidates out of generated prose.
///
/// Triple-backtick fences win when at least one of them reads to a complete
/// form. Otherwise every maximal balanced `( ... )` region is returned in
/// source order.
pub fn extract_blocks(prose: &str) -> Vec<Block> {
    let fenced: Vec<Block> = fenced_regions(prose)
        .into_iter()
        .filter(|body| !parse(body).forms.is_empty())
        .map(|text| Block {
            text,
            origin: BlockOrigin::Fenced,
        })
        .collect();
    if !fenced.is_empty() {
        return fenced;
    }
    balanced_regions(prose)
        .into_iter()
        .map(|(start, end)| Block {
            text: prose[start..end].to_string(),
            origin: BlockOrigin::RawScan,
        })
        .collect()
}

fn fenced_regions(prose: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = prose;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // the info string (e.g. `lisp`) runs to the end of the opening line
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                out.push(body[..close].to_string());
                rest = &body[close + 3..];
            }
            None => {
                out.push(body.to_string());
                break;
            }
        }
    }
    out
}

/// Byte ranges of maximal balanced parenthesized regions. Double-quoted
/// strings are honored once a region is open.
fn balanced_regions(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut open: Vec<usize> = Vec::new();
    let mut matched: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => open.push(i),
            b')' => {
                if let Some(start) = open.pop() {
                    matched.push((start, i + 1));
                }
            }
            b'"' if !open.is_empty() => {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j] != b'"' {
                    if bytes[j] == b'\\' {
                        j += 1;
                    }
                    j += 1;
                }
                if j >= bytes.len() {
                    // an unterminated string swallows the rest; leave it unscanned
                    i += 1;
                    continue;
                }
                i = j;
            }
            _ => {}
        }
        i += 1;
    }
    matched.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (start, end) in matched {
        match out.last() {
            Some(&(_, last_end)) if start < last_end => {}
            _ => out.push((start, end)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_fence() {
        let blocks = extract_blocks("Here is the model:\n```\n(defprotocol p basic)\n```");
        assert_eq!(
            blocks,
            vec![Block {
                text: "(defprotocol p basic)\n".into(),
                origin: BlockOrigin::Fenced
            }]
        );
    }

    #[test]
    fn no_parens() {
        assert!(extract_blocks("plain text, nothing structured.").is_empty());
    }

    #[test]
    fn raw_scan_in_order() {
        let blocks = extract_blocks("first (a (b)) then (c) done");
        let texts: Vec<_> = blocks.iter().map(|b| b.text.as_str()).collect();
        assert_eq!(texts, vec!["(a (b))", "(c)"]);
        assert!(blocks.iter().all(|b| b.origin == BlockOrigin::RawScan));
    }

    #[test]
    fn fence_without_forms_falls_back() {
        let blocks = extract_blocks("```bash\n\n```\nthen (x y)");
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].origin, BlockOrigin::RawScan);
        assert_eq!(blocks[0].text, "(x y)");
    }

    #[test]
    fn unclosed_outer_exposes_inner() {
        let blocks = extract_blocks("(outer (inner x) (more)");
        let texts: Vec<_> = blocks.iter().map(|b| b.text.as_str()).collect();
        assert_eq!(texts, vec!["(inner x)", "(more)"]);
    }

    #[test]
    fn strings_hide_parens() {
        let blocks = extract_blocks("(herald \"a ) b\") tail");
        assert_eq!(blocks[0].text, "(herald \"a ) b\")");
    }
}
