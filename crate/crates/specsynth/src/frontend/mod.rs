//! C frontend for the supported subset.
//!
//! Parses a source unit into a coarse AST that keeps exactly the structure
//! the rest of the pipeline needs: function definitions, loops, call sites
//! and target assertions, each with a faithful 1-based source span. The
//! supported subset covers functions with scalar/pointer/array parameters,
//! `for`/`while`/`do` loops, `if`/`switch`, calls, and `//@ assert` or
//! `assert(...)` target assertions. Input is assumed preprocessed or
//! preprocessor-free; `#include` lines are recorded as unresolved externals
//! instead of being expanded.

mod lexer;
mod parser;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: u32, col: u32, message: String },
    #[error("unsupported construct at {line}:{col}: {construct}")]
    UnsupportedConstruct {
        line: u32,
        col: u32,
        construct: String,
    },
    #[error("no assertion found at line {line}")]
    AssertionNotFound { line: u32 },
    #[error("line {line} is outside every function definition")]
    NotInFunction { line: u32 },
}

/// A single C source file plus its content hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub path: String,
    pub text: String,
    pub checksum: String,
}

impl SourceUnit {
    /// Wrap source text. The text must be non-empty; the checksum is the
    /// SHA-256 of the bytes, so identical text always yields identical keys.
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Result<Self, FrontendError> {
        let text = text.into();
        if text.is_empty() {
            return Err(FrontendError::Syntax {
                line: 1,
                col: 1,
                message: "empty source unit".into(),
            });
        }
        let checksum = hex_digest(&text);
        Ok(SourceUnit {
            path: path.into(),
            text,
            checksum,
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, FrontendError> {
        let text = std::fs::read_to_string(path).map_err(|e| FrontendError::Syntax {
            line: 1,
            col: 1,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::new(path.display().to_string(), text)
    }
}

fn hex_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// 1-based inclusive source region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl SourceSpan {
    pub fn contains_line(&self, line: u32) -> bool {
        self.start_line <= line && line <= self.end_line
    }

    pub fn contains(&self, other: &SourceSpan) -> bool {
        let starts_before = (self.start_line, self.start_col) <= (other.start_line, other.start_col);
        let ends_after = (self.end_line, self.end_col) >= (other.end_line, other.end_col);
        starts_before && ends_after
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AstId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AstKind {
    FunctionDef,
    LoopStmt,
    CallExpr,
    AssertStmt,
    Other,
}

#[derive(Debug, Clone)]
pub struct AstNode {
    pub kind: AstKind,
    /// Function name for `FunctionDef`, callee name for `CallExpr`.
    pub name: Option<String>,
    /// Asserted expression text for `AssertStmt`.
    pub expr: Option<String>,
    pub span: SourceSpan,
    pub children: Vec<AstId>,
}

/// Arena-backed AST. The root is an `Other` node spanning the whole unit;
/// child lists are ordered by start offset.
#[derive(Debug, Clone)]
pub struct Ast {
    nodes: Vec<AstNode>,
    root: AstId,
    /// Header names from `#include` lines, e.g. `<math.h>`.
    pub includes: Vec<String>,
    /// Names declared by prototypes that have no definition in the unit.
    pub prototypes: Vec<String>,
}

impl Ast {
    pub fn root(&self) -> AstId {
        self.root
    }

    pub fn node(&self, id: AstId) -> &AstNode {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = AstId> {
        (0..self.nodes.len()).map(AstId)
    }

    /// Function definitions in source order.
    pub fn function_defs(&self) -> Vec<AstId> {
        self.node(self.root)
            .children
            .iter()
            .copied()
            .filter(|id| self.node(*id).kind == AstKind::FunctionDef)
            .collect()
    }

    pub fn function_named(&self, name: &str) -> Option<AstId> {
        self.function_defs()
            .into_iter()
            .find(|id| self.node(*id).name.as_deref() == Some(name))
    }

    /// Preorder traversal of a subtree.
    pub fn preorder(&self, from: AstId) -> Vec<AstId> {
        let mut out = Vec::new();
        let mut stack = vec![from];
        while let Some(id) = stack.pop() {
            out.push(id);
            for child in self.node(id).children.iter().rev() {
                stack.push(*child);
            }
        }
        out
    }

    /// Count of nodes of one kind over the whole tree.
    pub fn count_kind(&self, kind: AstKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Kind/name skeleton of the structural nodes, used by round-trip
    /// oracles: comments never contribute and `Other` nodes are skipped.
    pub fn structural_signature(&self) -> Vec<(AstKind, Option<String>)> {
        self.preorder(self.root)
            .into_iter()
            .map(|id| self.node(id))
            .filter(|n| {
                matches!(
                    n.kind,
                    AstKind::FunctionDef | AstKind::LoopStmt | AstKind::CallExpr
                )
            })
            .map(|n| (n.kind, n.name.clone()))
            .collect()
    }

    /// All assertion nodes whose span covers `line`, in source order.
    pub fn assertions_at_line(&self, line: u32) -> Vec<AstId> {
        self.preorder(self.root)
            .into_iter()
            .filter(|id| {
                let n = self.node(*id);
                n.kind == AstKind::AssertStmt && n.span.contains_line(line)
            })
            .collect()
    }

    /// All assertion nodes in the unit, in source order.
    pub fn assertions(&self) -> Vec<AstId> {
        self.preorder(self.root)
            .into_iter()
            .filter(|id| self.node(*id).kind == AstKind::AssertStmt)
            .collect()
    }
}

/// Where the target assertion lives. `expression_text` is informational;
/// the line is what locates the assertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssertionLocator {
    pub line: u32,
    pub expression_text: Option<String>,
}

impl AssertionLocator {
    pub fn at_line(line: u32) -> Self {
        AssertionLocator {
            line,
            expression_text: None,
        }
    }
}

/// Parse a source unit into an AST covering the whole text.
pub fn parse_program(unit: &SourceUnit) -> Result<Ast, FrontendError> {
    let tokens = lexer::lex(&unit.text)?;
    parser::parse(&unit.text, tokens)
}

/// Resolve the function that contains the target assertion.
///
/// The line must fall inside a function definition (`NotInFunction`
/// otherwise) and an assertion must exist at that line (`AssertionNotFound`
/// otherwise). When several assertions share the line the first in source
/// order wins.
pub fn locate_assertion(ast: &Ast, locator: &AssertionLocator) -> Result<AstId, FrontendError> {
    let line = locator.line;
    let enclosing = ast
        .function_defs()
        .into_iter()
        .filter(|id| ast.node(*id).span.contains_line(line))
        .min_by_key(|id| {
            let s = ast.node(*id).span;
            s.end_line - s.start_line
        });
    let Some(func) = enclosing else {
        return Err(FrontendError::NotInFunction { line });
    };
    if ast.assertions_at_line(line).is_empty() {
        return Err(FrontendError::AssertionNotFound { line });
    }
    Ok(func)
}
