//! Automatic ACSL specification synthesis for C programs.
//!
//! The pipeline decomposes a program into an extended call graph whose nodes
//! are functions *and* loops, asks a pluggable language-model provider for
//! candidate specifications per component in bottom-up order, validates the
//! candidates with a pluggable deductive verifier (legality, satisfiability,
//! adequacy), and iterates until the target assertion is proved or an
//! iteration bound is reached. A final simplification pass removes clauses
//! that are not needed for the proof.
//!
//! Module map:
//! - [`frontend`] — C subset parsing with exact source spans.
//! - [`acsl`] — specification clauses: parsing, rendering, lifecycle.
//! - [`annotate`] — placeholder sites and annotated-program rendering.
//! - [`callgraph`] — the extended loop/call graph.
//! - [`llm`] — prompt construction and provider abstraction.
//! - [`verify`] — verifier backends (Frama-C/WP subprocess, mock oracle).
//! - [`pipeline`] — the iterative generate/validate/simplify driver.
//! - [`report`] — run and batch reports, text and CSV emission.
//! - [`cli`] — the `specsynth` command-line tool.

pub mod acsl;
pub mod annotate;
pub mod callgraph;
pub mod cli;
pub mod frontend;
pub mod llm;
pub mod pipeline;
pub mod report;
pub mod verify;
