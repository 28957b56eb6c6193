//! Shared test support: a random subset-program generator and the
//! independent oracles the derived expectations are frozen against.
//!
//! The oracles deliberately avoid the code paths they check: the token scan
//! never builds an AST and the reachability oracle never runs the worklist
//! construction.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use specsynth::frontend::{parse_program, Ast, AstKind, AssertionLocator, SourceUnit};
use specsynth::llm::provider::{FixtureProvider, FixtureRecord, QueryKey, SpecProvider};
use specsynth::llm::{LlmConfig, Prompt, ShotLibrary};
use specsynth::pipeline::{Pipeline, RunConfig, RunFailure, RunReport};
use specsynth::verify::mock::{MockOracle, RuleTable};
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU32, Ordering};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus/programs")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// random subset programs
// ---------------------------------------------------------------------------

#[derive(Clone)]
pub struct GenConfig {
    pub max_extra_fns: usize,
    pub max_stmts: usize,
    pub max_loop_depth: usize,
    pub max_loops_per_fn: usize,
    pub allow_do: bool,
    pub externals: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_extra_fns: 4,
            max_stmts: 5,
            max_loop_depth: 2,
            max_loops_per_fn: 2,
            allow_do: true,
            externals: true,
        }
    }
}

struct GenCtx<'a> {
    rng: &'a mut ChaCha8Rng,
    cfg: &'a GenConfig,
    fn_count: usize,
    out: String,
    vars: usize,
    loops_in_fn: usize,
    uses_external: bool,
}

impl GenCtx<'_> {
    fn line(&mut self, indent: usize, text: &str) {
        for _ in 0..indent {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn fresh_var(&mut self) -> String {
        let v = format!("v{}", self.vars);
        self.vars += 1;
        v
    }

    fn stmt_block(&mut self, indent: usize, depth: usize, callable: usize, var: &str) {
        let n = self.rng.random_range(1..=self.cfg.max_stmts);
        for _ in 0..n {
            self.statement(indent, depth, callable, var);
        }
    }

    fn statement(&mut self, indent: usize, depth: usize, callable: usize, var: &str) {
        let can_loop =
            depth < self.cfg.max_loop_depth && self.loops_in_fn < self.cfg.max_loops_per_fn;
        match self.rng.random_range(0..10u32) {
            0..=2 => {
                let lit = self.rng.random_range(0..50);
                self.line(indent, &format!("{var} = {var} + {lit};"));
            }
            3 => {
                let lit = self.rng.random_range(0..20);
                let v = self.fresh_var();
                self.line(indent, &format!("int {v} = {lit};"));
                self.line(indent, &format!("{var} = {var} + {v};"));
            }
            4 | 5 if can_loop => {
                self.loops_in_fn += 1;
                let i = self.fresh_var();
                let bound = self.rng.random_range(1..6);
                match self.rng.random_range(0..if self.cfg.allow_do { 3 } else { 2 }) {
                    0 => {
                        self.line(indent, &format!("int {i} = 0;"));
                        self.line(indent, &format!("for ({i} = 0; {i} < {bound}; {i}++) {{"));
                        self.stmt_block(indent + 1, depth + 1, callable, var);
                        self.line(indent, "}");
                    }
                    1 => {
                        self.line(indent, &format!("int {i} = 0;"));
                        self.line(indent, &format!("while ({i} < {bound}) {{"));
                        self.stmt_block(indent + 1, depth + 1, callable, var);
                        self.line(indent + 1, &format!("{i} = {i} + 1;"));
                        self.line(indent, "}");
                    }
                    _ => {
                        self.line(indent, &format!("int {i} = 0;"));
                        self.line(indent, "do {");
                        self.stmt_block(indent + 1, depth + 1, callable, var);
                        self.line(indent + 1, &format!("{i} = {i} + 1;"));
                        self.line(indent, &format!("}} while ({i} < {bound});"));
                    }
                }
            }
            6 => {
                let lit = self.rng.random_range(0..10);
                self.line(indent, &format!("if ({var} > {lit}) {{"));
                self.stmt_block(indent + 1, depth + 1, callable, var);
                self.line(indent, "}");
            }
            7 | 8 if callable > 0 => {
                let target = self.rng.random_range(0..callable);
                let lit = self.rng.random_range(0..9);
                self.line(indent, &format!("{var} = f{target}({var}, {lit});"));
            }
            9 if self.cfg.externals && self.rng.random_range(0..4u32) == 0 => {
                self.uses_external = true;
                self.line(indent, &format!("{var} = ext_op({var});"));
            }
            _ => {
                let lit = self.rng.random_range(0..9);
                self.line(indent, &format!("{var} = {var} - {lit};"));
            }
        }
    }
}

/// Generate a random program in the supported subset. Calls go strictly to
/// lower-numbered functions, so the call graph is a DAG; `main` is the last
/// definition and holds the single `//@ assert`.
pub fn gen_program(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> String {
    let fn_count = rng.random_range(0..=cfg.max_extra_fns);
    let mut ctx = GenCtx {
        rng,
        cfg,
        fn_count,
        out: String::new(),
        vars: 0,
        loops_in_fn: 0,
        uses_external: false,
    };

    for i in 0..fn_count {
        ctx.line(0, &format!("int f{i}(int a, int b);"));
    }
    for i in 0..fn_count {
        ctx.loops_in_fn = 0;
        ctx.vars = 0;
        ctx.line(0, &format!("int f{i}(int a, int b) {{"));
        ctx.line(1, "int r = a + b;");
        ctx.stmt_block(1, 0, i, "r");
        ctx.line(1, "return r;");
        ctx.line(0, "}");
        ctx.line(0, "");
    }

    ctx.loops_in_fn = 0;
    ctx.vars = 0;
    ctx.line(0, "int main() {");
    ctx.line(1, "int r = 0;");
    ctx.stmt_block(1, 0, fn_count, "r");
    ctx.line(1, "//@ assert r >= 0;");
    ctx.line(1, "return 0;");
    ctx.line(0, "}");

    let mut header = String::new();
    if ctx.uses_external {
        header.push_str("int ext_op(int x);\n");
    }
    header.push_str(&ctx.out);
    header
}

// ---------------------------------------------------------------------------
// token-scan oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Default, PartialEq, Eq)]
pub struct ScanCounts {
    pub functions: usize,
    pub loops: usize,
    pub calls: usize,
}

const SCAN_KEYWORDS: &[&str] = &[
    "if", "else", "while", "for", "do", "switch", "case", "default", "return", "break",
    "continue", "goto", "sizeof", "assert", "int", "char", "void", "long", "short", "unsigned",
    "signed", "float", "double",
];

#[derive(PartialEq, Clone, Debug)]
enum ScanTok {
    Word(String),
    Punct(char),
}

fn scan_tokens(src: &str) -> Vec<ScanTok> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b'/') {
                i += 1;
            }
            i += 2;
        } else if b == b'"' || b == b'\'' {
            let quote = b;
            i += 1;
            while i < bytes.len() && bytes[i] != quote {
                if bytes[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            i += 1;
        } else if b.is_ascii_alphabetic() || b == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(ScanTok::Word(src[start..i].to_string()));
        } else if b.is_ascii_whitespace() {
            i += 1;
        } else if b.is_ascii_digit() {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.') {
                i += 1;
            }
        } else {
            out.push(ScanTok::Punct(b as char));
            i += 1;
        }
    }
    out
}

/// Count function definitions, loop keywords at statement position, and
/// call sites by scanning tokens. Assumes `do` bodies are braced (the
/// generator always braces them).
pub fn token_scan(src: &str) -> ScanCounts {
    let toks = scan_tokens(src);
    let mut counts = ScanCounts::default();
    let mut depth: i32 = 0;
    let mut do_stack: Vec<i32> = Vec::new();

    for i in 0..toks.len() {
        match &toks[i] {
            ScanTok::Punct('{') => depth += 1,
            ScanTok::Punct('}') => depth -= 1,
            ScanTok::Word(w) => match w.as_str() {
                "for" => counts.loops += 1,
                "do" => {
                    counts.loops += 1;
                    do_stack.push(depth);
                }
                "while" => {
                    let closes_do = do_stack.last() == Some(&depth)
                        && i > 0
                        && toks[i - 1] == ScanTok::Punct('}');
                    if closes_do {
                        do_stack.pop();
                    } else {
                        counts.loops += 1;
                    }
                }
                _ => {
                    let followed_by_paren = toks.get(i + 1) == Some(&ScanTok::Punct('('));
                    if !followed_by_paren || SCAN_KEYWORDS.contains(&w.as_str()) {
                        continue;
                    }
                    if depth == 0 {
                        // definition if the matching ')' is followed by '{'
                        let mut j = i + 2;
                        let mut paren = 1;
                        while j < toks.len() && paren > 0 {
                            match toks[j] {
                                ScanTok::Punct('(') => paren += 1,
                                ScanTok::Punct(')') => paren -= 1,
                                _ => {}
                            }
                            j += 1;
                        }
                        if toks.get(j) == Some(&ScanTok::Punct('{')) {
                            counts.functions += 1;
                        }
                    } else {
                        counts.calls += 1;
                    }
                }
            },
            _ => {}
        }
    }
    counts
}

// ---------------------------------------------------------------------------
// reachability oracle
// ---------------------------------------------------------------------------

/// Brute-force fixpoint over (containment ∪ call) relations extracted by a
/// direct AST walk; independent of the worklist graph construction.
pub fn reachability_oracle(ast: &Ast, root_fn: &str) -> BTreeSet<String> {
    let mut defined: BTreeMap<String, specsynth::frontend::AstId> = BTreeMap::new();
    for f in ast.function_defs() {
        let name = ast.node(f).name.clone().unwrap();
        defined.entry(name).or_insert(f);
    }

    // per function: its loop names and the defined functions it calls
    let mut loops_of: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut calls_of: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (name, id) in &defined {
        let mut loops = Vec::new();
        let mut calls = BTreeSet::new();
        let mut k = 0;
        for node in ast.preorder(*id) {
            match ast.node(node).kind {
                AstKind::LoopStmt => {
                    k += 1;
                    loops.push(format!("{name}.loop{k}"));
                }
                AstKind::CallExpr => {
                    let callee = ast.node(node).name.clone().unwrap();
                    if defined.contains_key(&callee) {
                        calls.insert(callee);
                    }
                }
                _ => {}
            }
        }
        loops_of.insert(name.clone(), loops);
        calls_of.insert(name.clone(), calls);
    }

    let mut reached: BTreeSet<String> = BTreeSet::from([root_fn.to_string()]);
    loop {
        let fns: Vec<String> = reached
            .iter()
            .filter(|id| defined.contains_key(*id))
            .cloned()
            .collect();
        let before = reached.len();
        for f in fns {
            reached.extend(loops_of[&f].iter().cloned());
            reached.extend(calls_of[&f].iter().cloned());
        }
        if reached.len() == before {
            break;
        }
    }
    reached
}

// ---------------------------------------------------------------------------
// offline run harness
// ---------------------------------------------------------------------------

/// Fixture provider + mock oracle wiring for in-memory end-to-end runs.
pub struct Offline {
    pub provider: FixtureProvider,
    pub oracle: MockOracle,
    pub shots: ShotLibrary,
    pub cfg: RunConfig,
}

impl Offline {
    pub fn new(fixtures: Vec<FixtureRecord>, rules: RuleTable) -> Self {
        Offline {
            provider: FixtureProvider::from_records(fixtures),
            oracle: MockOracle::new(rules),
            shots: ShotLibrary::default(),
            cfg: RunConfig::default(),
        }
    }

    pub fn run_source(&self, src: &str) -> Result<RunReport, Box<RunFailure>> {
        let unit = SourceUnit::new("test.c", src).unwrap();
        let ast = parse_program(&unit).unwrap();
        let assertions = ast.assertions();
        assert_eq!(assertions.len(), 1, "offline harness wants one assertion");
        let locator = AssertionLocator {
            line: ast.node(assertions[0]).span.start_line,
            expression_text: ast.node(assertions[0]).expr.clone(),
        };
        let pipeline = Pipeline::new(&self.provider, &self.oracle, &self.shots, self.cfg.clone());
        pipeline.run(&unit, &locator).map_err(Box::new)
    }
}

/// Simple record constructor: wildcard checksum, any iteration.
pub fn record(node: &str, response: &str) -> FixtureRecord {
    FixtureRecord {
        checksum: "*".into(),
        node: node.into(),
        iteration: 0,
        response_text: response.into(),
    }
}

pub fn record_at(node: &str, iteration: u32, response: &str) -> FixtureRecord {
    FixtureRecord {
        checksum: "*".into(),
        node: node.into(),
        iteration,
        response_text: response.into(),
    }
}

/// Provider returning an empty response for every query; used when only
/// scheduling behavior matters.
pub struct EmptyProvider {
    calls: AtomicU32,
}

impl EmptyProvider {
    pub fn new() -> Self {
        EmptyProvider {
            calls: AtomicU32::new(0),
        }
    }
}

impl SpecProvider for EmptyProvider {
    fn id(&self) -> &str {
        "empty"
    }

    fn complete(
        &self,
        _key: &QueryKey,
        _prompt: &Prompt,
        _cfg: &LlmConfig,
    ) -> Result<String, specsynth::llm::provider::ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(String::new())
    }

    fn query_count(&self) -> u32 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Run one corpus program offline, returning the report and the oracle
/// (whose call log the deferral checks inspect).
pub fn corpus_run(
    name: &str,
    cfg: RunConfig,
) -> (Result<RunReport, Box<RunFailure>>, MockOracle) {
    let program = corpus_dir().join(name);
    let unit = SourceUnit::from_file(&program).unwrap();
    let provider = FixtureProvider::from_file(&program.with_extension("fixtures.json")).unwrap();
    let oracle = MockOracle::from_file(&program.with_extension("rules.json")).unwrap();
    let ast = parse_program(&unit).unwrap();
    let assertion = ast.assertions()[0];
    let locator = AssertionLocator {
        line: ast.node(assertion).span.start_line,
        expression_text: ast.node(assertion).expr.clone(),
    };
    let shots = ShotLibrary::default();
    let pipeline = Pipeline::new(&provider, &oracle, &shots, cfg);
    let result = pipeline.run(&unit, &locator).map_err(Box::new);
    (result, oracle)
}

/// `.c` program names in the corpus, sorted.
pub fn corpus_programs() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "c"))
        .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
        .collect();
    names.sort();
    names
}

/// Render a `/*@ ... */` block from clause lines for fixture responses.
pub fn block_of(clauses: &[String]) -> String {
    let mut out = String::from("/*@ ");
    for (i, c) in clauses.iter().enumerate() {
        if i > 0 {
            out.push_str("\n    ");
        }
        out.push_str(c);
        out.push(';');
    }
    out.push_str(" */");
    out
}
