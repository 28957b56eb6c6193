//! Placeholder sites and the annotated program.
//!
//! Every graph node owns exactly one placeholder site, immediately before a
//! function header or a loop keyword. All edits are pure insertions of
//! comment blocks, so the original text and every span stay valid: rendering
//! with all sites empty reproduces the input byte-for-byte, and mapped
//! rendering reports the output line of every clause so verifier goals can
//! be attributed back to the clause that produced them.

use crate::acsl::{self, AcslError, SpecBlock, SpecClause, SpecStatus};
use crate::callgraph::{ExtGraph, NodeKind};
use crate::frontend::{Ast, SourceSpan, SourceUnit};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("no placeholder site for node {0}")]
    UnknownSite(String),
    #[error(transparent)]
    Clause(#[from] AcslError),
    #[error("masked rendering must contain the infill marker exactly once, found {0}")]
    MarkerCount(usize),
}

/// One insertion point, immediately before its owner's first token.
#[derive(Debug, Clone)]
pub struct PlaceholderSite {
    pub owner: String,
    pub kind: NodeKind,
    /// Line the block is inserted above (the owner's first line).
    pub line: u32,
    pub ordinal: u32,
    /// Full span of the owning function or loop.
    pub anchor: SourceSpan,
}

/// Rendered position of one clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClauseLine {
    pub owner: String,
    pub index: usize,
    pub kind: acsl::ClauseKind,
    pub normalized: String,
    pub expr_normalized: String,
    pub line: u32,
}

/// Line bookkeeping produced by [`AnnotatedProgram::render_mapped`].
#[derive(Debug, Clone, Default)]
pub struct RenderMap {
    pub clauses: Vec<ClauseLine>,
    /// (site line, block line count) in ascending site order.
    site_lines: Vec<(u32, u32)>,
}

impl RenderMap {
    /// Output line of an original source line.
    pub fn rendered_line(&self, original: u32) -> u32 {
        let added: u32 = self
            .site_lines
            .iter()
            .filter(|(line, _)| *line <= original)
            .map(|(_, n)| *n)
            .sum();
        original + added
    }
}

/// A source unit plus placeholder sites and the clauses inserted so far.
/// Values are cheap to clone; mutation helpers have `with_*` counterparts
/// that return a new program, which is what simplification backtracking
/// relies on.
#[derive(Debug, Clone)]
pub struct AnnotatedProgram {
    unit: SourceUnit,
    sites: Vec<PlaceholderSite>,
    blocks: BTreeMap<String, SpecBlock>,
    next_seq: u64,
}

/// Create one placeholder per graph node.
pub fn insert_placeholders(
    unit: &SourceUnit,
    ast: &Ast,
    graph: &ExtGraph,
) -> AnnotatedProgram {
    let mut sites: Vec<PlaceholderSite> = graph
        .nodes()
        .iter()
        .map(|n| {
            let span = ast.node(n.ast).span;
            PlaceholderSite {
                owner: n.id.clone(),
                kind: n.kind,
                line: span.start_line,
                ordinal: 0,
                anchor: span,
            }
        })
        .collect();
    sites.sort_by_key(|s| (s.anchor.start_line, s.anchor.start_col));
    for (i, site) in sites.iter_mut().enumerate() {
        site.ordinal = i as u32 + 1;
    }
    AnnotatedProgram {
        unit: unit.clone(),
        sites,
        blocks: BTreeMap::new(),
        next_seq: 1,
    }
}

impl AnnotatedProgram {
    pub fn unit(&self) -> &SourceUnit {
        &self.unit
    }

    pub fn sites(&self) -> &[PlaceholderSite] {
        &self.sites
    }

    pub fn site(&self, owner: &str) -> Option<&PlaceholderSite> {
        self.sites.iter().find(|s| s.owner == owner)
    }

    pub fn block(&self, owner: &str) -> Option<&SpecBlock> {
        self.blocks.get(owner)
    }

    pub fn clause(&self, owner: &str, index: usize) -> Option<&SpecClause> {
        self.blocks.get(owner).and_then(|b| b.clauses.get(index))
    }

    pub fn clause_count(&self) -> usize {
        self.blocks.values().map(|b| b.clauses.len()).sum()
    }

    /// All clauses in site order, then block order.
    pub fn all_clauses(&self) -> Vec<(String, usize, &SpecClause)> {
        let mut out = Vec::new();
        for site in &self.sites {
            if let Some(block) = self.blocks.get(&site.owner) {
                for (i, c) in block.clauses.iter().enumerate() {
                    out.push((site.owner.clone(), i, c));
                }
            }
        }
        out
    }

    pub fn clauses_with_status(&self, status: SpecStatus) -> Vec<(String, usize)> {
        self.all_clauses()
            .into_iter()
            .filter(|(_, _, c)| c.status == status)
            .map(|(o, i, _)| (o, i))
            .collect()
    }

    /// Append a clause to its owner's block. Kind/owner consistency and
    /// duplicate rejection happen here, before any verifier call.
    pub fn push_clause(&mut self, owner: &str, clause: SpecClause) -> Result<(), AnnotateError> {
        let site = self
            .site(owner)
            .ok_or_else(|| AnnotateError::UnknownSite(owner.to_string()))?;
        let compatible = match site.kind {
            NodeKind::Function => clause.kind.is_function_kind(),
            NodeKind::Loop => clause.kind.is_loop_kind(),
        };
        if !compatible {
            return Err(AcslError::KindMismatch {
                kind: clause.kind.to_string(),
                owner: format!("{} ({})", owner, site.kind),
            }
            .into());
        }
        let block = self
            .blocks
            .entry(owner.to_string())
            .or_insert_with(|| SpecBlock::new(owner));
        if block.contains_normalized(&clause.normalized()) {
            return Err(AcslError::DuplicateClause {
                owner: owner.to_string(),
                text: clause.normalized(),
            }
            .into());
        }
        let mut clause = clause;
        clause.seq = self.next_seq;
        self.next_seq += 1;
        block.clauses.push(clause);
        Ok(())
    }

    pub fn with_clause(&self, owner: &str, clause: SpecClause) -> Result<Self, AnnotateError> {
        let mut next = self.clone();
        next.push_clause(owner, clause)?;
        Ok(next)
    }

    /// Re-insert a clause at a specific block position; the inverse of
    /// [`AnnotatedProgram::remove_clause`].
    pub fn insert_clause_at(
        &mut self,
        owner: &str,
        index: usize,
        clause: SpecClause,
    ) -> Result<(), AnnotateError> {
        self.push_clause(owner, clause)?;
        let block = self.blocks.get_mut(owner).expect("just pushed");
        let last = block.clauses.len() - 1;
        let clause = block.clauses.remove(last);
        block.clauses.insert(index.min(last), clause);
        Ok(())
    }

    /// Remove and return a clause; the block disappears when it empties, so
    /// no stray comment is ever emitted.
    pub fn remove_clause(&mut self, owner: &str, index: usize) -> Result<SpecClause, AnnotateError> {
        let block = self.blocks.get_mut(owner).ok_or_else(|| AcslError::UnknownClause {
            owner: owner.to_string(),
            index,
        })?;
        if index >= block.clauses.len() {
            return Err(AcslError::UnknownClause {
                owner: owner.to_string(),
                index,
            }
            .into());
        }
        let clause = block.clauses.remove(index);
        if block.clauses.is_empty() {
            self.blocks.remove(owner);
        }
        Ok(clause)
    }

    pub fn without_clause(&self, owner: &str, index: usize) -> Result<Self, AnnotateError> {
        let mut next = self.clone();
        next.remove_clause(owner, index)?;
        Ok(next)
    }

    pub fn set_status(
        &mut self,
        owner: &str,
        index: usize,
        status: SpecStatus,
    ) -> Result<(), AnnotateError> {
        let block = self.blocks.get_mut(owner).ok_or_else(|| AcslError::UnknownClause {
            owner: owner.to_string(),
            index,
        })?;
        let clause = block.clauses.get_mut(index).ok_or_else(|| AcslError::UnknownClause {
            owner: owner.to_string(),
            index,
        })?;
        debug_assert!(
            clause.status == status || clause.status.can_transition_to(status),
            "illegal status transition {:?} -> {:?}",
            clause.status,
            status
        );
        clause.status = status;
        Ok(())
    }

    pub fn find_clause_by_seq(&self, seq: u64) -> Option<(String, usize)> {
        for (owner, block) in &self.blocks {
            for (i, c) in block.clauses.iter().enumerate() {
                if c.seq == seq {
                    return Some((owner.clone(), i));
                }
            }
        }
        None
    }

    /// Render the annotated source. Sites without clauses emit nothing.
    pub fn render(&self) -> String {
        self.render_mapped().0
    }

    /// Render plus the clause/line map used for goal attribution.
    pub fn render_mapped(&self) -> (String, RenderMap) {
        let lines: Vec<&str> = self.unit.text.split_inclusive('\n').collect();
        let mut out = String::with_capacity(self.unit.text.len() + 256);
        let mut map = RenderMap::default();
        let mut added: u32 = 0;
        let mut site_iter = self.sites.iter().peekable();

        for (i, line) in lines.iter().enumerate() {
            let lineno = (i + 1) as u32;
            while let Some(site) = site_iter.peek() {
                if site.line != lineno {
                    break;
                }
                let site = site_iter.next().unwrap();
                let Some(block) = self.blocks.get(&site.owner) else {
                    continue;
                };
                if block.clauses.is_empty() {
                    continue;
                }
                let rendered = acsl::render_block(block).expect("non-empty block");
                let indent: String = line
                    .chars()
                    .take_while(|c| *c == ' ' || *c == '\t')
                    .collect();
                let block_lines: Vec<&str> = rendered.lines().collect();
                for (j, (bline, clause)) in
                    block_lines.iter().zip(block.clauses.iter()).enumerate()
                {
                    out.push_str(&indent);
                    out.push_str(bline);
                    out.push('\n');
                    map.clauses.push(ClauseLine {
                        owner: site.owner.clone(),
                        index: j,
                        kind: clause.kind,
                        normalized: clause.normalized(),
                        expr_normalized: clause.expression_normalized(),
                        line: lineno + added + j as u32,
                    });
                }
                map.site_lines.push((site.line, block_lines.len() as u32));
                added += block_lines.len() as u32;
            }
            out.push_str(line);
        }
        // sites past the last line (cannot happen for parsed programs)
        for site in site_iter {
            if self.blocks.get(&site.owner).is_some_and(|b| !b.clauses.is_empty()) {
                let rendered = acsl::render_block(&self.blocks[&site.owner]).unwrap();
                out.push_str(&rendered);
                out.push('\n');
            }
        }
        (out, map)
    }

    /// Render only the listed functions, replacing `target`'s site with the
    /// marker and every other site with its current block. Functions appear
    /// in source order, separated by blank lines.
    pub fn render_masked(
        &self,
        include_functions: &BTreeSet<String>,
        target: &str,
        marker: &str,
    ) -> Result<String, AnnotateError> {
        if self.site(target).is_none() {
            return Err(AnnotateError::UnknownSite(target.to_string()));
        }
        let lines: Vec<&str> = self.unit.text.lines().collect();
        let mut chunks: Vec<String> = Vec::new();
        let mut marker_count = 0usize;

        let mut fn_sites: Vec<&PlaceholderSite> = self
            .sites
            .iter()
            .filter(|s| s.kind == NodeKind::Function && include_functions.contains(&s.owner))
            .collect();
        fn_sites.sort_by_key(|s| s.anchor.start_line);

        for fsite in fn_sites {
            let mut chunk = String::new();
            for lineno in fsite.anchor.start_line..=fsite.anchor.end_line {
                let idx = (lineno - 1) as usize;
                let text = lines.get(idx).copied().unwrap_or("");
                let indent: String = text
                    .chars()
                    .take_while(|c| *c == ' ' || *c == '\t')
                    .collect();
                for site in self.sites.iter().filter(|s| s.line == lineno) {
                    if site.anchor.start_line < fsite.anchor.start_line
                        || site.anchor.end_line > fsite.anchor.end_line
                    {
                        continue;
                    }
                    if site.owner == target {
                        chunk.push_str(&indent);
                        chunk.push_str(marker);
                        chunk.push('\n');
                        marker_count += 1;
                    } else if let Some(block) = self.blocks.get(&site.owner) {
                        if !block.clauses.is_empty() {
                            let rendered = acsl::render_block(block).expect("non-empty block");
                            for bline in rendered.lines() {
                                chunk.push_str(&indent);
                                chunk.push_str(bline);
                                chunk.push('\n');
                            }
                        }
                    }
                }
                chunk.push_str(text);
                chunk.push('\n');
            }
            chunks.push(chunk);
        }

        if marker_count != 1 {
            return Err(AnnotateError::MarkerCount(marker_count));
        }
        Ok(chunks.join("\n"))
    }
}

/// Rebuild an annotated program from already-annotated source. The
/// annotation block directly above each placeholder site is lifted out of
/// the text and read back into clauses, so rendering the result reproduces
/// the input — the round-trip property the tests pin down.
pub fn harvest(unit: &SourceUnit, ast: &Ast, graph: &ExtGraph) -> AnnotatedProgram {
    let annotated = insert_placeholders(unit, ast, graph);
    let lines: Vec<&str> = unit.text.lines().collect();

    // per owner: harvested clauses plus the 1-based line range to strip
    let mut harvested: Vec<(String, Vec<SpecClause>)> = Vec::new();
    let mut strip: BTreeSet<u32> = BTreeSet::new();
    for site in &annotated.sites {
        if site.line < 2 {
            continue;
        }
        let above_idx = site.line - 1; // 1-based line just above the site
        let above = lines[(above_idx - 1) as usize].trim();
        let region: Option<(u32, u32)> = if above.starts_with("//@") {
            Some((above_idx, above_idx))
        } else if above.ends_with("*/") {
            let mut start = above_idx;
            loop {
                if lines[(start - 1) as usize].trim_start().starts_with("/*@") {
                    break Some((start, above_idx));
                }
                if start == 1 {
                    break None;
                }
                start -= 1;
            }
        } else {
            None
        };
        if let Some((from, to)) = region {
            let text = lines[(from - 1) as usize..to as usize].join("\n");
            let clauses = acsl::parse_clauses(&text).clauses;
            if !clauses.is_empty() {
                harvested.push((site.owner.clone(), clauses));
                strip.extend(from..=to);
            }
        }
    }

    // rebuild on the bare text; comments do not change the AST structure,
    // so node ids and site owners are stable
    let bare_text: String = lines
        .iter()
        .enumerate()
        .filter(|(i, _)| !strip.contains(&(*i as u32 + 1)))
        .map(|(_, l)| format!("{l}\n"))
        .collect();
    let bare_unit = SourceUnit::new(unit.path.clone(), bare_text)
        .expect("stripped source is non-empty");
    let bare_ast = crate::frontend::parse_program(&bare_unit)
        .expect("stripping comments preserves parseability");
    let bare_root = bare_ast
        .function_named(graph.enclosing_function(graph.root()).unwrap_or(graph.root()))
        .expect("root function survives stripping");
    let bare_graph = crate::callgraph::build_extended_call_graph(&bare_ast, bare_root)
        .expect("graph rebuilds on stripped source");
    let mut prog = insert_placeholders(&bare_unit, &bare_ast, &bare_graph);
    for (owner, clauses) in harvested {
        for clause in clauses {
            // kinds were validated when the text was produced
            let _ = prog.push_clause(&owner, clause);
        }
    }
    prog
}
