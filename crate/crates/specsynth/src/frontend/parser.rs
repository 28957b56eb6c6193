//! Recursive-descent parser producing the coarse AST.
//!
//! The parser keeps exactly the structure later stages need (functions,
//! loops, calls, assertions) and treats everything else as opaque `Other`
//! regions. Compound statements, `if`/`else` and `switch` are transparent:
//! their interesting children attach to the nearest enclosing function or
//! loop node, which is what the call-graph scan expects.

use super::lexer::{TokKind, Token};
use super::{Ast, AstId, AstKind, AstNode, FrontendError, SourceSpan};

const STMT_KEYWORDS: &[&str] = &[
    "if", "else", "while", "for", "do", "switch", "case", "default", "return", "break",
    "continue", "goto", "sizeof", "assert",
];

struct Parser<'a> {
    text: &'a str,
    toks: &'a [Token],
    pos: usize,
    nodes: Vec<AstNode>,
    includes: Vec<String>,
    prototypes: Vec<String>,
    defined: Vec<String>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, off: usize) -> Option<&Token> {
        self.toks.get(self.pos + off)
    }

    fn bump(&mut self) -> Option<&Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn last_span(&self) -> SourceSpan {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn is_punct(&self, off: usize, c: char) -> bool {
        matches!(self.peek_at(off), Some(t) if t.kind == TokKind::Punct(c))
    }

    fn ident_at(&self, off: usize) -> Option<&str> {
        match self.peek_at(off) {
            Some(Token {
                kind: TokKind::Ident(name),
                ..
            }) => Some(name),
            _ => None,
        }
    }

    fn eof_error(&self, what: &str) -> FrontendError {
        let span = self
            .toks
            .last()
            .map(|t| t.span)
            .unwrap_or(SourceSpan {
                start_line: 1,
                start_col: 1,
                end_line: 1,
                end_col: 1,
            });
        FrontendError::Syntax {
            line: span.end_line,
            col: span.end_col,
            message: format!("unexpected end of file, expected {what}"),
        }
    }

    fn syntax_error(&self, tok: &Token, message: impl Into<String>) -> FrontendError {
        FrontendError::Syntax {
            line: tok.span.start_line,
            col: tok.span.start_col,
            message: message.into(),
        }
    }

    fn unsupported(&self, tok: &Token, construct: &str) -> FrontendError {
        FrontendError::UnsupportedConstruct {
            line: tok.span.start_line,
            col: tok.span.start_col,
            construct: construct.into(),
        }
    }

    fn add_node(&mut self, node: AstNode) -> AstId {
        let id = AstId(self.nodes.len());
        self.nodes.push(node);
        id
    }

    /// `( * ident ) (` — a function-pointer declarator or indirect call.
    fn fn_pointer_ahead(&self) -> bool {
        self.is_punct(0, '(')
            && self.is_punct(1, '*')
            && self.ident_at(2).is_some()
            && self.is_punct(3, ')')
            && self.is_punct(4, '(')
    }

    fn expect_punct(&mut self, c: char) -> Result<SourceSpan, FrontendError> {
        match self.peek() {
            Some(t) if t.kind == TokKind::Punct(c) => {
                let span = t.span;
                self.pos += 1;
                Ok(span)
            }
            Some(t) => {
                let t = t.clone();
                Err(self.syntax_error(&t, format!("expected '{c}'")))
            }
            None => Err(self.eof_error(&format!("'{c}'"))),
        }
    }

    /// Consume an expression region, building nested `CallExpr` nodes.
    ///
    /// Stops *before* the terminator: a `;` at region depth zero when
    /// `stop_semi`, a `:` at depth zero when `stop_colon`, or the `)` that
    /// would close the region when `stop_close_paren`. Returns collected
    /// top-level call nodes.
    fn scan_expr_region(
        &mut self,
        stop_semi: bool,
        stop_colon: bool,
        stop_close_paren: bool,
    ) -> Result<Vec<AstId>, FrontendError> {
        struct OpenCall {
            name: String,
            span: SourceSpan,
            depth_inside: i32,
            children: Vec<AstId>,
        }
        let mut out: Vec<AstId> = Vec::new();
        let mut open: Vec<OpenCall> = Vec::new();
        let mut paren: i32 = 0;
        let mut brace: i32 = 0;
        let mut bracket: i32 = 0;

        loop {
            let Some(tok) = self.peek() else {
                if stop_semi || stop_colon || stop_close_paren {
                    return Err(self.eof_error("end of expression"));
                }
                return Ok(out);
            };
            match &tok.kind {
                TokKind::Punct(';') if stop_semi && paren == 0 && brace == 0 && bracket == 0 => {
                    break;
                }
                TokKind::Punct(':') if stop_colon && paren == 0 && brace == 0 && bracket == 0 => {
                    break;
                }
                TokKind::Punct('(') => {
                    if self.fn_pointer_ahead() {
                        let t = tok.clone();
                        return Err(self.unsupported(&t, "function pointer"));
                    }
                    paren += 1;
                    self.bump();
                }
                TokKind::Punct(')') => {
                    if paren == 0 && stop_close_paren {
                        break;
                    }
                    if paren == 0 {
                        let t = tok.clone();
                        return Err(self.syntax_error(&t, "unbalanced ')'"));
                    }
                    paren -= 1;
                    let end_span = tok.span;
                    self.bump();
                    // a ')' that returns to an open call's outer depth
                    // closes exactly that call
                    if let Some(done) = open.pop_if(|top| top.depth_inside == paren + 1) {
                        let node = AstNode {
                            kind: AstKind::CallExpr,
                            name: Some(done.name),
                            expr: None,
                            span: SourceSpan {
                                start_line: done.span.start_line,
                                start_col: done.span.start_col,
                                end_line: end_span.end_line,
                                end_col: end_span.end_col,
                            },
                            children: done.children,
                        };
                        let id = self.add_node(node);
                        match open.last_mut() {
                            Some(parent) => parent.children.push(id),
                            None => out.push(id),
                        }
                    }
                }
                TokKind::Punct('{') => {
                    brace += 1;
                    self.bump();
                }
                TokKind::Punct('}') => {
                    if brace == 0 {
                        // let the caller deal with a closing brace
                        break;
                    }
                    brace -= 1;
                    self.bump();
                }
                TokKind::Punct('[') => {
                    bracket += 1;
                    self.bump();
                }
                TokKind::Punct(']') => {
                    bracket -= 1;
                    self.bump();
                }
                TokKind::Ident(name) => {
                    let is_call = self.is_punct(1, '(')
                        && !STMT_KEYWORDS.contains(&name.as_str());
                    if is_call {
                        let name = name.clone();
                        let span = tok.span;
                        self.bump(); // ident
                        self.bump(); // '('
                        paren += 1;
                        open.push(OpenCall {
                            name,
                            span,
                            depth_inside: paren,
                            children: Vec::new(),
                        });
                    } else {
                        self.bump();
                    }
                }
                _ => {
                    self.bump();
                }
            }
        }
        if !open.is_empty() {
            return Err(self.eof_error("')' closing a call"));
        }
        Ok(out)
    }

    /// Slice of the source between two byte offsets, trimmed.
    fn slice(&self, start: usize, end: usize) -> String {
        self.text[start..end].trim().to_string()
    }

    fn parse_compound(&mut self, children: &mut Vec<AstId>) -> Result<SourceSpan, FrontendError> {
        self.expect_punct('{')?;
        loop {
            match self.peek() {
                None => return Err(self.eof_error("'}'")),
                Some(t) if t.kind == TokKind::Punct('}') => {
                    let span = t.span;
                    self.pos += 1;
                    return Ok(span);
                }
                Some(_) => self.parse_stmt(children)?,
            }
        }
    }

    fn parse_stmt(&mut self, children: &mut Vec<AstId>) -> Result<(), FrontendError> {
        let Some(tok) = self.peek() else {
            return Err(self.eof_error("statement"));
        };
        let tok_span = tok.span;
        match &tok.kind {
            TokKind::Punct('{') => {
                self.parse_compound(children)?;
                Ok(())
            }
            TokKind::Punct(';') => {
                self.bump();
                Ok(())
            }
            TokKind::Preproc(content) => {
                self.record_preproc(&content.clone());
                self.bump();
                Ok(())
            }
            TokKind::AcslBlock(_) => {
                self.bump();
                Ok(())
            }
            TokKind::AcslLine(content) => {
                let content = content.clone();
                self.bump();
                if let Some(expr) = acsl_assert_expr(&content) {
                    let id = self.add_node(AstNode {
                        kind: AstKind::AssertStmt,
                        name: None,
                        expr: Some(expr),
                        span: tok_span,
                        children: Vec::new(),
                    });
                    children.push(id);
                }
                Ok(())
            }
            TokKind::Ident(kw) => match kw.as_str() {
                "for" | "while" => {
                    let start = tok_span;
                    self.bump();
                    self.expect_punct('(')?;
                    let mut loop_children = self.scan_expr_region(false, false, true)?;
                    self.expect_punct(')')?;
                    self.parse_stmt(&mut loop_children)?;
                    let end = self.last_span();
                    let id = self.add_node(AstNode {
                        kind: AstKind::LoopStmt,
                        name: None,
                        expr: None,
                        span: join(start, end),
                        children: loop_children,
                    });
                    children.push(id);
                    Ok(())
                }
                "do" => {
                    let start = tok_span;
                    self.bump();
                    let mut loop_children = Vec::new();
                    self.parse_stmt(&mut loop_children)?;
                    match self.peek() {
                        Some(t) if t.kind == TokKind::Ident("while".into()) => {
                            self.pos += 1;
                        }
                        Some(t) => {
                            let t = t.clone();
                            return Err(self.syntax_error(&t, "expected 'while' after do-body"));
                        }
                        None => return Err(self.eof_error("'while'")),
                    }
                    self.expect_punct('(')?;
                    let cond_calls = self.scan_expr_region(false, false, true)?;
                    loop_children.extend(cond_calls);
                    self.expect_punct(')')?;
                    let end = self.expect_punct(';')?;
                    let id = self.add_node(AstNode {
                        kind: AstKind::LoopStmt,
                        name: None,
                        expr: None,
                        span: join(start, end),
                        children: loop_children,
                    });
                    children.push(id);
                    Ok(())
                }
                "if" => {
                    self.bump();
                    self.expect_punct('(')?;
                    let cond_calls = self.scan_expr_region(false, false, true)?;
                    children.extend(cond_calls);
                    self.expect_punct(')')?;
                    self.parse_stmt(children)?;
                    if self.ident_at(0) == Some("else") {
                        self.bump();
                        self.parse_stmt(children)?;
                    }
                    Ok(())
                }
                "switch" => {
                    self.bump();
                    self.expect_punct('(')?;
                    let cond_calls = self.scan_expr_region(false, false, true)?;
                    children.extend(cond_calls);
                    self.expect_punct(')')?;
                    self.parse_stmt(children)
                }
                "case" => {
                    self.bump();
                    let calls = self.scan_expr_region(false, true, false)?;
                    children.extend(calls);
                    self.expect_punct(':')?;
                    Ok(())
                }
                "default" => {
                    self.bump();
                    self.expect_punct(':')?;
                    Ok(())
                }
                "assert" if self.is_punct(1, '(') => {
                    let start = tok_span;
                    self.bump();
                    let open = self.bump().expect("peeked '('").clone();
                    let mut calls = self.scan_expr_region(false, false, true)?;
                    let close = match self.peek() {
                        Some(t) => t.clone(),
                        None => return Err(self.eof_error("')'")),
                    };
                    self.expect_punct(')')?;
                    let end = self.expect_punct(';')?;
                    let expr = self.slice(open.end, close.start);
                    let mut node = AstNode {
                        kind: AstKind::AssertStmt,
                        name: None,
                        expr: Some(expr),
                        span: join(start, end),
                        children: Vec::new(),
                    };
                    node.children.append(&mut calls);
                    let id = self.add_node(node);
                    children.push(id);
                    Ok(())
                }
                _ => {
                    // expression or declaration statement
                    let calls = self.scan_expr_region(true, false, false)?;
                    children.extend(calls);
                    self.expect_punct(';')?;
                    Ok(())
                }
            },
            _ => {
                let calls = self.scan_expr_region(true, false, false)?;
                children.extend(calls);
                self.expect_punct(';')?;
                Ok(())
            }
        }
    }

    fn record_preproc(&mut self, content: &str) {
        if let Some(rest) = content.strip_prefix("include") {
            self.includes.push(rest.trim().to_string());
        }
    }

    /// One top-level item: function definition, prototype, or declaration.
    fn parse_external_item(&mut self, children: &mut Vec<AstId>) -> Result<(), FrontendError> {
        let start_tok = self.peek().expect("caller checked").clone();
        let start = start_tok.span;
        let mut last_ident: Option<String> = None;

        loop {
            let Some(tok) = self.peek() else {
                return Err(self.eof_error("';' ending a declaration"));
            };
            let tok = tok.clone();
            match &tok.kind {
                TokKind::Ident(name) => {
                    if name == "typedef" || name == "struct" || name == "union" || name == "enum" {
                        // fall through: the declarator heuristics below still
                        // work because the last identifier before '(' wins
                    }
                    last_ident = Some(name.clone());
                    self.bump();
                }
                TokKind::Punct('*') => {
                    self.bump();
                }
                TokKind::Punct('[') => {
                    self.skip_balanced('[', ']')?;
                }
                TokKind::Punct('(') => {
                    if self.fn_pointer_ahead() {
                        return Err(self.unsupported(&tok, "function pointer"));
                    }
                    let Some(name) = last_ident.clone() else {
                        return Err(self.syntax_error(&tok, "unexpected '('"));
                    };
                    self.skip_params()?;
                    return self.finish_function_item(children, start, name, &tok);
                }
                TokKind::Punct(';') => {
                    let end = tok.span;
                    self.bump();
                    let id = self.add_node(AstNode {
                        kind: AstKind::Other,
                        name: None,
                        expr: None,
                        span: join(start, end),
                        children: Vec::new(),
                    });
                    children.push(id);
                    return Ok(());
                }
                TokKind::Punct('=') => {
                    self.bump();
                    self.scan_expr_region(true, false, false)?;
                    let end = self.expect_punct(';')?;
                    let id = self.add_node(AstNode {
                        kind: AstKind::Other,
                        name: None,
                        expr: None,
                        span: join(start, end),
                        children: Vec::new(),
                    });
                    children.push(id);
                    return Ok(());
                }
                TokKind::Punct('{') => {
                    // struct/union/enum body, then declarators up to ';'
                    self.skip_balanced('{', '}')?;
                    loop {
                        match self.peek() {
                            None => return Err(self.eof_error("';'")),
                            Some(t) if t.kind == TokKind::Punct(';') => break,
                            Some(_) => {
                                self.bump();
                            }
                        }
                    }
                    let end = self.expect_punct(';')?;
                    let id = self.add_node(AstNode {
                        kind: AstKind::Other,
                        name: None,
                        expr: None,
                        span: join(start, end),
                        children: Vec::new(),
                    });
                    children.push(id);
                    return Ok(());
                }
                TokKind::Punct(',') => {
                    self.bump();
                }
                _ => {
                    return Err(self.syntax_error(&tok, "unexpected token in declaration"));
                }
            }
        }
    }

    fn finish_function_item(
        &mut self,
        children: &mut Vec<AstId>,
        start: SourceSpan,
        name: String,
        open_tok: &Token,
    ) -> Result<(), FrontendError> {
        match self.peek() {
            Some(t) if t.kind == TokKind::Punct('{') => {
                let mut body = Vec::new();
                let end = self.parse_compound(&mut body)?;
                self.defined.push(name.clone());
                let id = self.add_node(AstNode {
                    kind: AstKind::FunctionDef,
                    name: Some(name),
                    expr: None,
                    span: join(start, end),
                    children: body,
                });
                children.push(id);
                Ok(())
            }
            Some(t) if t.kind == TokKind::Punct(';') => {
                let end = t.span;
                self.pos += 1;
                self.prototypes.push(name);
                let id = self.add_node(AstNode {
                    kind: AstKind::Other,
                    name: None,
                    expr: None,
                    span: join(start, end),
                    children: Vec::new(),
                });
                children.push(id);
                Ok(())
            }
            Some(t) => {
                let t = t.clone();
                Err(self.syntax_error(&t, "expected '{' or ';' after parameter list"))
            }
            None => Err(self.syntax_error(
                open_tok,
                "unexpected end of file after parameter list",
            )),
        }
    }

    /// Consume a parameter list starting at the current `(`.
    fn skip_params(&mut self) -> Result<(), FrontendError> {
        self.expect_punct('(')?;
        let mut depth = 1;
        loop {
            let Some(tok) = self.peek() else {
                return Err(self.eof_error("')'"));
            };
            if self.fn_pointer_ahead() {
                let t = tok.clone();
                return Err(self.unsupported(&t, "function pointer"));
            }
            match tok.kind {
                TokKind::Punct('(') => depth += 1,
                TokKind::Punct(')') => {
                    depth -= 1;
                    if depth == 0 {
                        self.bump();
                        return Ok(());
                    }
                }
                _ => {}
            }
            self.bump();
        }
    }

    fn skip_balanced(&mut self, open: char, close: char) -> Result<(), FrontendError> {
        self.expect_punct(open)?;
        let mut depth = 1;
        loop {
            let Some(tok) = self.peek() else {
                return Err(self.eof_error(&format!("'{close}'")));
            };
            if tok.kind == TokKind::Punct(open) {
                depth += 1;
            } else if tok.kind == TokKind::Punct(close) {
                depth -= 1;
                if depth == 0 {
                    self.bump();
                    return Ok(());
                }
            }
            self.bump();
        }
    }
}

fn join(start: SourceSpan, end: SourceSpan) -> SourceSpan {
    SourceSpan {
        start_line: start.start_line,
        start_col: start.start_col,
        end_line: end.end_line,
        end_col: end.end_col,
    }
}

/// Extract the asserted expression from a `//@ assert <expr>;` comment body.
fn acsl_assert_expr(content: &str) -> Option<String> {
    let trimmed = content.trim_start();
    let rest = trimmed.strip_prefix("assert")?;
    if !rest.starts_with(|c: char| c.is_whitespace() || c == '(') {
        return None;
    }
    let expr = rest.trim().trim_end_matches(';').trim();
    if expr.is_empty() {
        None
    } else {
        Some(expr.to_string())
    }
}

pub(crate) fn parse(text: &str, tokens: Vec<Token>) -> Result<Ast, FrontendError> {
    let mut p = Parser {
        text,
        toks: &tokens,
        pos: 0,
        nodes: Vec::new(),
        includes: Vec::new(),
        prototypes: Vec::new(),
        defined: Vec::new(),
    };

    let mut top: Vec<AstId> = Vec::new();
    while let Some(tok) = p.peek() {
        let tok = tok.clone();
        match &tok.kind {
            TokKind::Preproc(content) => {
                p.record_preproc(content);
                p.bump();
            }
            TokKind::AcslLine(_) | TokKind::AcslBlock(_) => {
                p.bump();
            }
            TokKind::Punct(';') => {
                p.bump();
            }
            TokKind::Ident(_) => p.parse_external_item(&mut top)?,
            _ => {
                return Err(p.syntax_error(&tok, "expected a declaration or definition"));
            }
        }
    }

    let line_count = text.lines().count().max(1) as u32;
    let last_len = text.lines().last().map(|l| l.len()).unwrap_or(1).max(1) as u32;
    let root_span = SourceSpan {
        start_line: 1,
        start_col: 1,
        end_line: line_count,
        end_col: last_len,
    };
    let root = AstId(p.nodes.len());
    let defined = p.defined.clone();
    p.nodes.push(AstNode {
        kind: AstKind::Other,
        name: None,
        expr: None,
        span: root_span,
        children: top,
    });

    let prototypes = p
        .prototypes
        .iter()
        .filter(|name| !defined.contains(name))
        .cloned()
        .collect();

    Ok(Ast {
        nodes: p.nodes,
        root,
        includes: p.includes,
        prototypes,
    })
}
