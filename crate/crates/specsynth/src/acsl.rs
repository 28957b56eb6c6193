//! ACSL specification clauses: parsing, rendering, and lifecycle state.
//!
//! Providers chat, so [`parse_clauses`] is deliberately lenient: clauses are
//! harvested from `/*@ ... */` and `//@ ...` annotation comments, from fenced
//! code blocks, and from bare keyword-led lines anywhere in the input. The
//! verifier's legality gate is responsible for rejecting garbage; the parser
//! only has to find the candidates. Unknown ACSL keywords (behaviors, ghost
//! code) yield no clause but are recorded as diagnostics.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AcslError {
    #[error("cannot render an empty specification block")]
    EmptyBlock,
    #[error("clause expression must be non-empty")]
    EmptyExpression,
    #[error("clause kind {kind} is not allowed on {owner}")]
    KindMismatch { kind: String, owner: String },
    #[error("no clause at index {index} for {owner}")]
    UnknownClause { owner: String, index: usize },
    #[error("duplicate clause for {owner}: {text}")]
    DuplicateClause { owner: String, text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClauseKind {
    Requires,
    Ensures,
    Assigns,
    LoopInvariant,
    LoopAssigns,
    Assert,
}

impl ClauseKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ClauseKind::Requires => "requires",
            ClauseKind::Ensures => "ensures",
            ClauseKind::Assigns => "assigns",
            ClauseKind::LoopInvariant => "loop invariant",
            ClauseKind::LoopAssigns => "loop assigns",
            ClauseKind::Assert => "assert",
        }
    }

    /// Clause kinds that belong on function contracts.
    pub fn is_function_kind(self) -> bool {
        matches!(
            self,
            ClauseKind::Requires | ClauseKind::Ensures | ClauseKind::Assigns | ClauseKind::Assert
        )
    }

    /// Clause kinds that belong on loop annotations.
    pub fn is_loop_kind(self) -> bool {
        matches!(
            self,
            ClauseKind::LoopInvariant | ClauseKind::LoopAssigns | ClauseKind::Assert
        )
    }
}

impl std::fmt::Display for ClauseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Lifecycle of a clause: candidates become legal, then satisfiable, then
/// retained; elimination is possible at each gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecStatus {
    Candidate,
    Legal,
    Satisfiable,
    Retained,
    EliminatedIllegal,
    EliminatedUnsat,
    EliminatedRedundant,
}

impl SpecStatus {
    /// Valid lifecycle moves. The forward chain is monotone and each live
    /// state may step to its elimination state.
    pub fn can_transition_to(self, next: SpecStatus) -> bool {
        use SpecStatus::*;
        matches!(
            (self, next),
            (Candidate, Legal)
                | (Legal, Satisfiable)
                | (Satisfiable, Retained)
                | (Candidate, EliminatedIllegal)
                | (Legal, EliminatedUnsat)
                | (Satisfiable, EliminatedUnsat)
                | (Satisfiable, EliminatedRedundant)
                | (Retained, EliminatedRedundant)
        )
    }
}

/// Which iteration and provider produced a clause.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClauseOrigin {
    pub iteration: u32,
    pub provider: String,
}

/// One ACSL clause. `expression` never embeds `;`-separated siblings; the
/// semicolons inside quantifier binders (`\forall integer i; ...`) are part
/// of the expression.
#[derive(Debug, Clone)]
pub struct SpecClause {
    pub kind: ClauseKind,
    pub expression: String,
    pub origin: ClauseOrigin,
    pub status: SpecStatus,
    /// Global insertion sequence, assigned when the clause enters a program.
    pub(crate) seq: u64,
}

impl SpecClause {
    /// Interior whitespace is collapsed so that clause text is stable no
    /// matter how a provider wrapped its reply.
    pub fn new(kind: ClauseKind, expression: impl Into<String>) -> Result<Self, AcslError> {
        let expression = normalize(&expression.into());
        if expression.is_empty() {
            return Err(AcslError::EmptyExpression);
        }
        Ok(SpecClause {
            kind,
            expression,
            origin: ClauseOrigin::default(),
            status: SpecStatus::Candidate,
            seq: 0,
        })
    }

    pub fn with_origin(mut self, iteration: u32, provider: &str) -> Self {
        self.origin = ClauseOrigin {
            iteration,
            provider: provider.to_string(),
        };
        self
    }

    /// Whitespace-collapsed `keyword expression` text; clause equality.
    pub fn normalized(&self) -> String {
        normalize(&format!("{} {}", self.kind.keyword(), self.expression))
    }

    pub fn expression_normalized(&self) -> String {
        normalize(&self.expression)
    }

    pub fn rendered_line(&self) -> String {
        format!("{} {};", self.kind.keyword(), self.expression)
    }
}

impl PartialEq for SpecClause {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.expression_normalized() == other.expression_normalized()
    }
}

/// Collapse whitespace runs to single spaces and trim.
pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The ordered clauses attached to one graph node's placeholder.
#[derive(Debug, Clone, Default)]
pub struct SpecBlock {
    pub owner: String,
    pub clauses: Vec<SpecClause>,
}

impl SpecBlock {
    pub fn new(owner: impl Into<String>) -> Self {
        SpecBlock {
            owner: owner.into(),
            clauses: Vec::new(),
        }
    }

    pub fn contains_normalized(&self, normalized: &str) -> bool {
        self.clauses.iter().any(|c| c.normalized() == normalized)
    }
}

/// Render a block as its canonical annotation comment. One clause per line;
/// a lone `assert` uses the single-line `//@` form.
pub fn render_block(block: &SpecBlock) -> Result<String, AcslError> {
    if block.clauses.is_empty() {
        return Err(AcslError::EmptyBlock);
    }
    if block.clauses.len() == 1 && block.clauses[0].kind == ClauseKind::Assert {
        return Ok(format!("//@ assert {};", block.clauses[0].expression));
    }
    let mut lines = Vec::with_capacity(block.clauses.len());
    for (i, clause) in block.clauses.iter().enumerate() {
        let prefix = if i == 0 { "/*@ " } else { "    " };
        let mut line = format!("{prefix}{}", clause.rendered_line());
        if i + 1 == block.clauses.len() {
            line.push_str(" */");
        }
        lines.push(line);
    }
    Ok(lines.join("\n"))
}

/// Result of lenient clause extraction.
#[derive(Debug, Clone, Default)]
pub struct ParsedClauses {
    pub clauses: Vec<SpecClause>,
    pub diagnostics: Vec<String>,
}

/// Harvest every clause found in `text`.
pub fn parse_clauses(text: &str) -> ParsedClauses {
    let mut out = ParsedClauses::default();
    let mut covered: Vec<(usize, usize)> = Vec::new();

    // 1. annotation comments
    let mut idx = 0;
    let bytes = text.as_bytes();
    while let Some(found) = text[idx..].find("/*@") {
        let start = idx + found;
        let body_start = start + 3;
        match text[body_start..].find("*/") {
            Some(close) => {
                let body = &text[body_start..body_start + close];
                parse_region(body, &mut out);
                let end = body_start + close + 2;
                covered.push((start, end));
                idx = end;
            }
            None => break,
        }
    }
    idx = 0;
    while let Some(found) = text[idx..].find("//@") {
        let start = idx + found;
        if covered.iter().any(|(s, e)| start >= *s && start < *e) {
            idx = start + 3;
            continue;
        }
        let line_end = text[start..]
            .find('\n')
            .map(|o| start + o)
            .unwrap_or(bytes.len());
        parse_region(&text[start + 3..line_end], &mut out);
        covered.push((start, line_end));
        idx = line_end;
    }

    // 2. fenced code blocks outside annotation comments
    let mut search = 0;
    while let Some(found) = text[search..].find("```") {
        let open = search + found;
        if covered.iter().any(|(s, e)| open >= *s && open < *e) {
            search = open + 3;
            continue;
        }
        let body_start = match text[open + 3..].find('\n') {
            Some(o) => open + 3 + o + 1,
            None => break,
        };
        let Some(close_rel) = text[body_start..].find("```") else {
            break;
        };
        let close = body_start + close_rel;
        parse_region(&text[body_start..close], &mut out);
        covered.push((open, close + 3));
        search = close + 3;
    }

    // 3. bare keyword-led lines anywhere else
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        if covered.iter().any(|(s, e)| start < *e && offset > *s) {
            continue;
        }
        let trimmed = line.trim_start();
        if leading_keyword(trimmed).is_some() {
            parse_region(trimmed, &mut out);
        }
    }

    out
}

fn leading_keyword(fragment: &str) -> Option<(ClauseKind, usize)> {
    let kinds = [
        ("loop invariant", ClauseKind::LoopInvariant),
        ("loop assigns", ClauseKind::LoopAssigns),
        ("requires", ClauseKind::Requires),
        ("ensures", ClauseKind::Ensures),
        ("assigns", ClauseKind::Assigns),
        ("assert", ClauseKind::Assert),
    ];
    let words: Vec<&str> = fragment.split_whitespace().collect();
    if words.is_empty() {
        return None;
    }
    for (kw, kind) in kinds {
        let kw_words: Vec<&str> = kw.split(' ').collect();
        if words.len() > kw_words.len() && words[..kw_words.len()] == kw_words[..] {
            // byte length of the keyword within the fragment
            let mut consumed = 0;
            let mut rest = fragment;
            for w in &kw_words {
                let at = rest.find(w).unwrap();
                consumed += at + w.len();
                rest = &fragment[consumed..];
            }
            return Some((kind, consumed));
        }
    }
    None
}

/// Split a region into clauses at top-level semicolons. Semicolons consumed
/// by quantifier binders (`\forall`/`\exists ... ;`) stay inside the
/// expression.
fn parse_region(body: &str, out: &mut ParsedClauses) {
    // strip block-comment decorations (`@`, `* `) without eating a leading
    // pointer dereference like `*b == ...`
    fn strip_decorations(line: &str) -> &str {
        let mut s = line.trim_start();
        loop {
            if let Some(rest) = s.strip_prefix('@') {
                s = rest.trim_start();
            } else if s.starts_with('*')
                && s[1..].starts_with(|c: char| c.is_whitespace() || c == '@')
            {
                s = s[1..].trim_start();
            } else if s == "*" {
                s = "";
            } else {
                break;
            }
        }
        s
    }
    let cleaned: String = body
        .lines()
        .map(|l| strip_decorations(l).trim_end())
        .collect::<Vec<_>>()
        .join("\n");

    let mut fragments = Vec::new();
    let mut current = String::new();
    let mut pending_binders = 0usize;
    let mut token = String::new();
    for ch in cleaned.chars() {
        if ch.is_alphanumeric() || ch == '_' || ch == '\\' {
            token.push(ch);
        } else {
            if token == "\\forall" || token == "\\exists" {
                pending_binders += 1;
            }
            token.clear();
        }
        if ch == ';' {
            if pending_binders > 0 {
                pending_binders -= 1;
                current.push(ch);
            } else {
                fragments.push(std::mem::take(&mut current));
            }
        } else {
            current.push(ch);
        }
    }
    if !current.trim().is_empty() {
        fragments.push(current);
    }

    for fragment in fragments {
        let fragment = fragment.trim();
        if fragment.is_empty() {
            continue;
        }
        match leading_keyword(fragment) {
            Some((kind, consumed)) => {
                let expr = fragment[consumed..].trim();
                if expr.is_empty() {
                    out.diagnostics
                        .push(format!("clause without expression dropped: {fragment}"));
                    continue;
                }
                match SpecClause::new(kind, expr) {
                    Ok(clause) => out.clauses.push(clause),
                    Err(e) => out.diagnostics.push(format!("{e}: {fragment}")),
                }
            }
            None => {
                let head: String = fragment.split_whitespace().take(2).collect::<Vec<_>>().join(" ");
                out.diagnostics
                    .push(format!("unknown specification keyword ignored: {head}"));
            }
        }
    }
}
