//! Minimal Kotlin-aware lexer: just enough structure for comment stripping,
//! SLOC counting, and package/import line classification.
//!
//! The lexer is total: any UTF-8 input produces a span list that partitions
//! the input exactly. Unterminated constructs extend to end of input and are
//! flagged via [`LexSpan::terminated`]. It understands:
//!
//! - `//` line comments (the trailing newline stays outside the span)
//! - nested `/* /* */ */` block comments
//! - `"..."` strings with backslash escapes
//! - `"""..."""` raw strings (a closing run of three or more quotes ends the
//!   literal, matching the compiler's greedy rule)
//! - `${...}` string templates, tracked by brace depth only; nested string
//!   contents inside a template are treated as string continuation
//! - `'x'` character literals, lexed as string-kind spans
//!
//! It is not a Kotlin grammar: no tokens, no AST, no semantics.

use serde::{Deserialize, Serialize};

/// What a span of bytes is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    Code,
    LineComment,
    BlockComment,
    String,
    RawString,
}

impl SpanKind {
    pub fn is_comment(self) -> bool {
        matches!(self, SpanKind::LineComment | SpanKind::BlockComment)
    }
}

/// A half-open byte range `[start, end)` of one kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexSpan {
    pub kind: SpanKind,
    pub start: usize,
    pub end: usize,
    /// False when the construct ran off the end of the input.
    pub terminated: bool,
}

/// Skip a `${...}` template expression by brace depth, starting at the `$`.
/// Returns the index just past the matching `}` (or end of input).
fn skip_template(bytes: &[u8], at: usize) -> usize {
    let mut i = at + 2;
    let mut depth = 1usize;
    while i < bytes.len() && depth > 0 {
        match bytes[i] {
            b'{' => depth += 1,
            b'}' => depth -= 1,
            _ => {}
        }
        i += 1;
    }
    i
}

/// Lex `source` into spans that partition it exactly.
pub fn lex_spans(source: &str) -> Vec<LexSpan> {
    let bytes = source.as_bytes();
    let n = bytes.len();
    let mut spans = Vec::new();
    let mut code_start = 0usize;
    let mut i = 0usize;

    let flush_code = |spans: &mut Vec<LexSpan>, from: usize, to: usize| {
        if to > from {
            spans.push(LexSpan {
                kind: SpanKind::Code,
                start: from,
                end: to,
                terminated: true,
            });
        }
    };

    while i < n {
        match bytes[i] {
            b'/' if i + 1 < n && bytes[i + 1] == b'/' => {
                flush_code(&mut spans, code_start, i);
                let start = i;
                i += 2;
                while i < n && bytes[i] != b'\n' {
                    i += 1;
                }
                spans.push(LexSpan {
                    kind: SpanKind::LineComment,
                    start,
                    end: i,
                    terminated: true,
                });
                code_start = i;
            }
            b'/' if i + 1 < n && bytes[i + 1] == b'*' => {
                flush_code(&mut spans, code_start, i);
                let start = i;
                i += 2;
                let mut depth = 1usize;
                let mut terminated = false;
                while i < n {
                    if bytes[i] == b'/' && i + 1 < n && bytes[i + 1] == b'*' {
                        depth += 1;
                        i += 2;
                    } else if bytes[i] == b'*' && i + 1 < n && bytes[i + 1] == b'/' {
                        depth -= 1;
                        i += 2;
                        if depth == 0 {
                            terminated = true;
                            break;
                        }
                    } else {
                        i += 1;
                    }
                }
                spans.push(LexSpan {
                    kind: SpanKind::BlockComment,
                    start,
                    end: i,
                    terminated,
                });
                code_start = i;
            }
            b'"' => {
                flush_code(&mut spans, code_start, i);
                let start = i;
                let raw = i + 2 < n && bytes[i + 1] == b'"' && bytes[i + 2] == b'"';
                let mut terminated = false;
                if raw {
                    i += 3;
                    while i < n {
                        if bytes[i] == b'"' {
                            let run_start = i;
                            while i < n && bytes[i] == b'"' {
                                i += 1;
                            }
                            if i - run_start >= 3 {
                                terminated = true;
                                break;
                            }
                        } else if bytes[i] == b'$' && i + 1 < n && bytes[i + 1] == b'{' {
                            i = skip_template(bytes, i);
                        } else {
                            i += 1;
                        }
                    }
                } else {
                    i += 1;
                    while i < n {
                        match bytes[i] {
                            b'\\' => i = (i + 2).min(n),
                            b'"' => {
                                i += 1;
                                terminated = true;
                                break;
                            }
                            b'$' if i + 1 < n && bytes[i + 1] == b'{' => {
                                i = skip_template(bytes, i);
                            }
                            _ => i += 1,
                        }
                    }
                }
                spans.push(LexSpan {
                    kind: if raw {
                        SpanKind::RawString
                    } else {
                        SpanKind::String
                    },
                    start,
                    end: i,
                    terminated,
                });
                code_start = i;
            }
            b'\'' => {
                flush_code(&mut spans, code_start, i);
                let start = i;
                i += 1;
                let mut terminated = false;
                while i < n {
                    match bytes[i] {
                        b'\\' => i = (i + 2).min(n),
                        b'\'' => {
                            i += 1;
                            terminated = true;
                            break;
                        }
                        _ => i += 1,
                    }
                }
                spans.push(LexSpan {
                    kind: SpanKind::String,
                    start,
                    end: i,
                    terminated,
                });
                code_start = i;
            }
            _ => i += 1,
        }
    }
    flush_code(&mut spans, code_start, n);
    spans
}

/// Per-byte comment flags for `source`.
fn comment_bytes(source: &str) -> Vec<bool> {
    let mut flags = vec![false; source.len()];
    for span in lex_spans(source) {
        if span.kind.is_comment() {
            flags[span.start..span.end].fill(true);
        }
    }
    flags
}

/// Remove all comments from `source`.
///
/// A line that loses a comment gets its trailing whitespace trimmed; if
/// nothing but whitespace remains, the whole line (including its newline)
/// is dropped. Lines without comments, strings included, pass through
/// byte-exact. Idempotent.
pub fn strip_comments(source: &str) -> String {
    let flags = comment_bytes(source);
    let bytes = source.as_bytes();
    let n = bytes.len();
    let mut out = String::with_capacity(n);
    let mut i = 0usize;
    while i < n {
        let line_end = source[i..]
            .find('\n')
            .map(|p| i + p)
            .unwrap_or(n);
        let has_newline = line_end < n;
        let mut had_comment = false;
        let mut kept: Vec<u8> = Vec::with_capacity(line_end - i);
        for j in i..line_end {
            if flags[j] {
                had_comment = true;
            } else {
                kept.push(bytes[j]);
            }
        }
        if had_comment {
            while kept.last().is_some_and(|b| b.is_ascii_whitespace()) {
                kept.pop();
            }
            if !kept.is_empty() {
                // comment span boundaries sit on char boundaries, so the
                // remaining bytes are valid UTF-8
                out.push_str(std::str::from_utf8(&kept).expect("kept bytes are UTF-8"));
                if has_newline {
                    out.push('\n');
                }
            }
        } else {
            out.push_str(&source[i..line_end]);
            if has_newline {
                out.push('\n');
            }
        }
        i = line_end + 1;
    }
    out
}

/// Source lines of code: lines with at least one non-whitespace character
/// outside comments.
pub fn count_sloc(source: &str) -> usize {
    let flags = comment_bytes(source);
    let bytes = source.as_bytes();
    let n = bytes.len();
    let mut sloc = 0usize;
    let mut i = 0usize;
    while i < n {
        let line_end = source[i..]
            .find('\n')
            .map(|p| i + p)
            .unwrap_or(n);
        let significant = (i..line_end).any(|j| !flags[j] && !bytes[j].is_ascii_whitespace());
        if significant {
            sloc += 1;
        }
        i = line_end + 1;
    }
    sloc
}

/// Classification of one physical line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineClass {
    Package,
    Import,
    Blank,
    Other,
}

/// Classify a single line (must not contain a newline) by its first
/// whitespace-delimited token.
pub fn classify_line(line: &str) -> LineClass {
    debug_assert!(!line.contains('\n'));
    match line.split_whitespace().next() {
        None => LineClass::Blank,
        Some("package") => LineClass::Package,
        Some("import") => LineClass::Import,
        Some(_) => LineClass::Other,
    }
}
