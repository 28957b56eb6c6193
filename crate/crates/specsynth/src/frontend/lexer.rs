//! Token scanner for the C subset.
//!
//! Regular comments are dropped. ACSL annotation comments (`//@ ...` and
//! `/*@ ... */`) and preprocessor lines survive as dedicated tokens because
//! the parser needs them: `//@ assert` marks target assertions and
//! `#include` lines are recorded as unresolved externals.

use super::{FrontendError, SourceSpan};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokKind {
    Ident(String),
    Number(String),
    StrLit,
    CharLit,
    Punct(char),
    /// Content after `//@`.
    AcslLine(String),
    /// Content between `/*@` and `*/`.
    AcslBlock(String),
    /// Content after `#`, continuation lines joined.
    Preproc(String),
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokKind,
    pub span: SourceSpan,
    /// Byte offset of the first character.
    pub start: usize,
    /// Byte offset one past the last character.
    pub end: usize,
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str) -> Self {
        Scanner {
            bytes: text.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.bytes.get(self.pos + 1).copied()
    }

    fn peek3(&self) -> Option<u8> {
        self.bytes.get(self.pos + 2).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn here(&self) -> (u32, u32, usize) {
        (self.line, self.col, self.pos)
    }

    fn error(&self, message: impl Into<String>) -> FrontendError {
        FrontendError::Syntax {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

pub(crate) fn lex(text: &str) -> Result<Vec<Token>, FrontendError> {
    let mut s = Scanner::new(text);
    let mut out = Vec::new();
    let mut line_is_blank = true;

    while let Some(b) = s.peek() {
        if b == b'\n' {
            s.bump();
            line_is_blank = true;
            continue;
        }
        if b.is_ascii_whitespace() {
            s.bump();
            continue;
        }

        let (start_line, start_col, start) = s.here();

        // preprocessor line (only when nothing else precedes it on the line)
        if b == b'#' && line_is_blank {
            s.bump();
            let mut content = String::new();
            loop {
                match s.peek() {
                    None | Some(b'\n') => break,
                    Some(b'\\') if s.peek2() == Some(b'\n') => {
                        s.bump();
                        s.bump();
                        content.push(' ');
                    }
                    Some(c) => {
                        content.push(c as char);
                        s.bump();
                    }
                }
            }
            out.push(Token {
                kind: TokKind::Preproc(content.trim().to_string()),
                span: SourceSpan {
                    start_line,
                    start_col,
                    end_line: s.line,
                    end_col: s.col.saturating_sub(1).max(1),
                },
                start,
                end: s.pos,
            });
            continue;
        }
        line_is_blank = false;

        if b == b'/' && s.peek2() == Some(b'/') {
            let acsl = s.peek3() == Some(b'@');
            s.bump();
            s.bump();
            if acsl {
                s.bump();
            }
            let mut content = String::new();
            while let Some(c) = s.peek() {
                if c == b'\n' {
                    break;
                }
                content.push(c as char);
                s.bump();
            }
            if acsl {
                out.push(Token {
                    kind: TokKind::AcslLine(content),
                    span: SourceSpan {
                        start_line,
                        start_col,
                        end_line: start_line,
                        end_col: s.col.saturating_sub(1).max(1),
                    },
                    start,
                    end: s.pos,
                });
            }
            continue;
        }

        if b == b'/' && s.peek2() == Some(b'*') {
            let acsl = s.peek3() == Some(b'@');
            s.bump();
            s.bump();
            if acsl {
                s.bump();
            }
            let body_start = s.pos;
            loop {
                match s.peek() {
                    None => return Err(s.error("unterminated comment")),
                    Some(b'*') if s.peek2() == Some(b'/') => break,
                    Some(_) => {
                        s.bump();
                    }
                }
            }
            let body_end = s.pos;
            s.bump();
            s.bump();
            if acsl {
                out.push(Token {
                    kind: TokKind::AcslBlock(text[body_start..body_end].to_string()),
                    span: SourceSpan {
                        start_line,
                        start_col,
                        end_line: s.line,
                        end_col: s.col.saturating_sub(1).max(1),
                    },
                    start,
                    end: s.pos,
                });
            }
            continue;
        }

        if b == b'"' || b == b'\'' {
            let quote = b;
            s.bump();
            loop {
                match s.peek() {
                    None | Some(b'\n') => return Err(s.error("unterminated literal")),
                    Some(b'\\') => {
                        s.bump();
                        s.bump();
                    }
                    Some(c) => {
                        s.bump();
                        if c == quote {
                            break;
                        }
                    }
                }
            }
            out.push(Token {
                kind: if quote == b'"' {
                    TokKind::StrLit
                } else {
                    TokKind::CharLit
                },
                span: SourceSpan {
                    start_line,
                    start_col,
                    end_line: s.line,
                    end_col: s.col.saturating_sub(1).max(1),
                },
                start,
                end: s.pos,
            });
            continue;
        }

        if is_ident_start(b) {
            let mut name = String::new();
            while let Some(c) = s.peek() {
                if !is_ident_char(c) {
                    break;
                }
                name.push(c as char);
                s.bump();
            }
            out.push(Token {
                kind: TokKind::Ident(name),
                span: SourceSpan {
                    start_line,
                    start_col,
                    end_line: start_line,
                    end_col: s.col - 1,
                },
                start,
                end: s.pos,
            });
            continue;
        }

        if b.is_ascii_digit() {
            let mut lit = String::new();
            while let Some(c) = s.peek() {
                let continues = is_ident_char(c)
                    || c == b'.'
                    || ((c == b'+' || c == b'-')
                        && matches!(lit.as_bytes().last(), Some(b'e') | Some(b'E')));
                if !continues {
                    break;
                }
                lit.push(c as char);
                s.bump();
            }
            out.push(Token {
                kind: TokKind::Number(lit),
                span: SourceSpan {
                    start_line,
                    start_col,
                    end_line: start_line,
                    end_col: s.col - 1,
                },
                start,
                end: s.pos,
            });
            continue;
        }

        // every remaining character is a single-char punctuator; the coarse
        // parser never needs multi-char operators
        s.bump();
        out.push(Token {
            kind: TokKind::Punct(b as char),
            span: SourceSpan {
                start_line,
                start_col,
                end_line: start_line,
                end_col: start_col,
            },
            start,
            end: s.pos,
        });
    }

    Ok(out)
}
