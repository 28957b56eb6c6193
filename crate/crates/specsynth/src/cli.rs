//! The `specsynth` command-line tool.
//!
//! Subcommands: `run` synthesizes specifications for a single program,
//! `bench` drives a corpus and aggregates a batch report, `graph` emits the
//! extended call graph as DOT. Exit codes: 0 success, 1 verification
//! failure (or a run that aborted), 2 usage/config error.
//!
//! Configuration precedence is flags > environment > config file. The
//! environment supplies the live provider's credentials:
//! `SPECSYNTH_API_KEY` and `SPECSYNTH_BASE_URL`.

use crate::callgraph::build_extended_call_graph;
use crate::frontend::{
    locate_assertion, parse_program, AssertionLocator, FrontendError, SourceUnit,
};
use crate::llm::provider::{FixtureProvider, HttpProvider, HttpProviderConfig, SpecProvider};
use crate::llm::{LlmConfig, ShotLibrary};
use crate::pipeline::{Pipeline, RunConfig};
use crate::report::{
    emit_batch_report, emit_run_report, BatchReport, ProgramResult, ProgramStatus, RepeatResult,
    ReportFormat,
};
use crate::verify::framac::{FramaCBackend, FramaCConfig};
use crate::verify::mock::MockOracle;
use crate::verify::VerifierBackend;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Parser, Debug)]
#[command(
    name = "specsynth",
    about = "Synthesize ACSL specifications for C programs and verify a target assertion"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Synthesize specifications for one program.
    Run(RunArgs),
    /// Run a corpus of programs and aggregate a batch report.
    Bench(BenchArgs),
    /// Emit the extended call graph in DOT format.
    Graph(GraphArgs),
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Candidate provider: fixture | http.
    #[arg(long)]
    provider: Option<String>,
    /// Fixture response records: a JSON file or a directory of them.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Few-shot examples per prompt.
    #[arg(long)]
    shots: Option<usize>,
    /// Verifier backend: mock | framac.
    #[arg(long)]
    verifier: Option<String>,
    /// Mock-oracle rule table (JSON); defaults to the program's
    /// `<name>.rules.json` sidecar.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Per-check verifier timeout in seconds.
    #[arg(long)]
    wp_timeout: Option<u64>,
    /// WP prover passed to Frama-C.
    #[arg(long)]
    wp_prover: Option<String>,
    /// Frama-C binary (defaults to `frama-c` on PATH).
    #[arg(long)]
    framac_bin: Option<PathBuf>,
    /// Iteration bound.
    #[arg(long)]
    max_iterations: Option<u32>,
    /// Skip the final simplification pass.
    #[arg(long)]
    no_simplify: bool,
    /// Include wall-clock timings in emitted reports (offline reports
    /// redact them to stay byte-deterministic).
    #[arg(long)]
    timings: bool,
    /// JSON config file, lowest precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    input: PathBuf,
    /// Line of the target assertion; auto-detected when the program has
    /// exactly one assertion.
    #[arg(long)]
    assert_line: Option<u32>,
    /// Write the annotated program here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the run report here (text).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the run report here (CSV).
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    repeats: Option<u32>,
    /// Programs verified in parallel.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    assert_line: Option<u32>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default, Debug)]
struct FileConfig {
    provider: Option<String>,
    model: Option<String>,
    max_tokens: Option<u32>,
    temperature: Option<f64>,
    shots: Option<usize>,
    verifier: Option<String>,
    wp_timeout: Option<u64>,
    wp_prover: Option<String>,
    max_iterations: Option<u32>,
    base_url: Option<String>,
}

/// Fully resolved configuration after flags > env > file.
struct Resolved {
    run_cfg: RunConfig,
    provider_kind: String,
    verifier_kind: String,
    fixtures: Option<PathBuf>,
    rules: Option<PathBuf>,
    base_url: String,
    api_key: Option<String>,
    framac: FramaCConfig,
    timings: bool,
}

impl Resolved {
    /// Offline mode is deterministic; timings are redacted there unless
    /// explicitly requested.
    fn include_timings(&self) -> bool {
        self.timings || self.provider_kind == "http" || self.verifier_kind == "framac"
    }
}

fn resolve(common: &CommonArgs) -> Result<Resolved, String> {
    let file: FileConfig = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| format!("invalid config {}: {e}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let defaults_llm = LlmConfig::default();
    let llm = LlmConfig {
        provider: common
            .provider
            .clone()
            .or(file.provider.clone())
            .unwrap_or(defaults_llm.provider),
        model: common.model.clone().or(file.model).unwrap_or(defaults_llm.model),
        max_tokens: common
            .max_tokens
            .or(file.max_tokens)
            .unwrap_or(defaults_llm.max_tokens),
        temperature: common
            .temperature
            .or(file.temperature)
            .unwrap_or(defaults_llm.temperature),
        shots: common.shots.or(file.shots).unwrap_or(defaults_llm.shots),
    };
    llm.validate().map_err(|e| e.to_string())?;

    let defaults_run = RunConfig::default();
    let run_cfg = RunConfig {
        max_iterations: common
            .max_iterations
            .or(file.max_iterations)
            .unwrap_or(defaults_run.max_iterations)
            .max(1),
        verifier_timeout: Duration::from_secs(
            common
                .wp_timeout
                .or(file.wp_timeout)
                .unwrap_or(defaults_run.verifier_timeout.as_secs()),
        ),
        simplify: !common.no_simplify,
        llm: llm.clone(),
    };

    let provider_kind = llm.provider.clone();
    if provider_kind != "fixture" && provider_kind != "http" {
        return Err(format!("unknown provider '{provider_kind}' (use fixture|http)"));
    }
    let verifier_kind = common
        .verifier
        .clone()
        .or(file.verifier)
        .unwrap_or_else(|| "mock".into());
    if verifier_kind != "mock" && verifier_kind != "framac" {
        return Err(format!("unknown verifier '{verifier_kind}' (use mock|framac)"));
    }

    let base_url = std::env::var("SPECSYNTH_BASE_URL")
        .ok()
        .or(file.base_url)
        .unwrap_or_else(|| HttpProviderConfig::default().base_url);
    let api_key = std::env::var("SPECSYNTH_API_KEY").ok();

    let framac = FramaCConfig {
        binary: common
            .framac_bin
            .clone()
            .unwrap_or_else(|| PathBuf::from("frama-c")),
        prover: common
            .wp_prover
            .clone()
            .or(file.wp_prover)
            .unwrap_or_else(|| FramaCConfig::default().prover),
        scratch_dir: None,
    };

    Ok(Resolved {
        run_cfg,
        provider_kind,
        verifier_kind,
        fixtures: common.fixtures.clone(),
        rules: common.rules.clone(),
        base_url,
        api_key,
        framac,
        timings: common.timings,
    })
}

/// `foo.c` -> `foo.<ext>` sidecar path.
fn sidecar(program: &Path, ext: &str) -> PathBuf {
    program.with_extension(ext)
}

fn build_provider(
    resolved: &Resolved,
    program: &Path,
) -> Result<Box<dyn SpecProvider>, String> {
    match resolved.provider_kind.as_str() {
        "fixture" => {
            let source = resolved
                .fixtures
                .clone()
                .or_else(|| {
                    let side = sidecar(program, "fixtures.json");
                    side.exists().then_some(side)
                })
                .ok_or_else(|| {
                    format!(
                        "fixture provider needs --fixtures or {}",
                        sidecar(program, "fixtures.json").display()
                    )
                })?;
            let provider = if source.is_dir() {
                FixtureProvider::from_dir(&source)
            } else {
                FixtureProvider::from_file(&source)
            }
            .map_err(|e| e.to_string())?;
            Ok(Box::new(provider))
        }
        "http" => {
            let provider = HttpProvider::new(HttpProviderConfig {
                base_url: resolved.base_url.clone(),
                api_key: resolved.api_key.clone(),
                max_requests: None,
                retry_base: Duration::from_millis(500),
            })
            .map_err(|e| e.to_string())?;
            Ok(Box::new(provider))
        }
        other => Err(format!("unknown provider '{other}'")),
    }
}

fn build_backend(
    resolved: &Resolved,
    program: &Path,
) -> Result<Box<dyn VerifierBackend>, String> {
    match resolved.verifier_kind.as_str() {
        "mock" => {
            let source = resolved
                .rules
                .clone()
                .or_else(|| {
                    let side = sidecar(program, "rules.json");
                    side.exists().then_some(side)
                })
                .ok_or_else(|| {
                    format!(
                        "mock verifier needs --rules or {}",
                        sidecar(program, "rules.json").display()
                    )
                })?;
            Ok(Box::new(MockOracle::from_file(&source).map_err(|e| e.to_string())?))
        }
        "framac" => Ok(Box::new(FramaCBackend::new(resolved.framac.clone()))),
        other => Err(format!("unknown verifier '{other}'")),
    }
}

/// Pick the assertion line: explicit flag, `<name>.assert` sidecar, or the
/// unique in-source assertion.
fn resolve_locator(
    unit: &SourceUnit,
    program: &Path,
    assert_line: Option<u32>,
) -> Result<AssertionLocator, String> {
    if let Some(line) = assert_line {
        return Ok(AssertionLocator::at_line(line));
    }
    let side = sidecar(program, "assert");
    if side.exists() {
        let text = std::fs::read_to_string(&side)
            .map_err(|e| format!("cannot read {}: {e}", side.display()))?;
        let line: u32 = text
            .split_whitespace()
            .next()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| format!("{} must hold a line number", side.display()))?;
        return Ok(AssertionLocator::at_line(line));
    }
    let ast = parse_program(unit).map_err(|e| e.to_string())?;
    let assertions = ast.assertions();
    match assertions.len() {
        0 => Err("program has no assertion; pass --assert-line".into()),
        1 => {
            let node = ast.node(assertions[0]);
            Ok(AssertionLocator {
                line: node.span.start_line,
                expression_text: node.expr.clone(),
            })
        }
        n => Err(format!(
            "program has {n} assertions; pass --assert-line to pick one"
        )),
    }
}

pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/usage text
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Graph(args) => cmd_graph(args),
    }
}

fn write_or_report(path: &Path, content: &str) -> Result<(), String> {
    std::fs::write(path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn cmd_run(args: RunArgs) -> i32 {
    let resolved = match resolve(&args.common) {
        Ok(r) => r,
        Err(e) => return config_error(&e),
    };
    let unit = match SourceUnit::from_file(&args.input) {
        Ok(u) => u,
        Err(e) => return config_error(&e.to_string()),
    };
    let locator = match resolve_locator(&unit, &args.input, args.assert_line) {
        Ok(l) => l,
        Err(e) => return config_error(&e),
    };
    let provider = match build_provider(&resolved, &args.input) {
        Ok(p) => p,
        Err(e) => return config_error(&e),
    };
    let backend = match build_backend(&resolved, &args.input) {
        Ok(b) => b,
        Err(e) => return config_error(&e),
    };
    let shots = ShotLibrary::default();
    let pipeline = Pipeline::new(&*provider, &*backend, &shots, resolved.run_cfg.clone());

    let name = args.input.display().to_string();
    let (report, failed) = match pipeline.run(&unit, &locator) {
        Ok(report) => (report, None),
        Err(failure) => {
            let msg = failure.to_string();
            (*failure.partial, Some(msg))
        }
    };

    let include_timings = resolved.include_timings();
    let text = emit_run_report(&name, &report, ReportFormat::Text, include_timings);
    print!("{text}");
    if let Some(msg) = &failed {
        eprintln!("run aborted: {msg}");
    }
    if let Some(out) = &args.out {
        if let Err(e) = write_or_report(out, &report.final_text) {
            return config_error(&e);
        }
    }
    if let Some(path) = &args.report {
        if let Err(e) = write_or_report(path, &text) {
            return config_error(&e);
        }
    }
    if let Some(path) = &args.csv {
        let csv = emit_run_report(&name, &report, ReportFormat::Csv, include_timings);
        if let Err(e) = write_or_report(path, &csv) {
            return config_error(&e);
        }
    }
    if report.success && failed.is_none() {
        0
    } else {
        1
    }
}

/// All `.c` files under the corpus root, sorted by relative path.
fn discover_programs(root: &Path) -> Result<Vec<PathBuf>, String> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path.extension().is_some_and(|x| x == "c") {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, &mut out).map_err(|e| format!("cannot scan {}: {e}", root.display()))?;
    out.sort();
    if out.is_empty() {
        return Err(format!("no .c programs under {}", root.display()));
    }
    Ok(out)
}

fn bench_one(resolved: &Resolved, root: &Path, program: &Path, repeats: u32) -> ProgramResult {
    let name = program
        .strip_prefix(root)
        .unwrap_or(program)
        .display()
        .to_string();
    let category = program
        .strip_prefix(root)
        .ok()
        .and_then(|p| p.parent())
        .map(|p| p.display().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "-".into());

    let finish = |status: ProgramStatus, repeats: Vec<RepeatResult>| ProgramResult {
        name: name.clone(),
        category: category.clone(),
        status,
        repeats,
    };

    let unit = match SourceUnit::from_file(program) {
        Ok(u) => u,
        Err(e) => return finish(ProgramStatus::Error(e.to_string()), vec![]),
    };
    // unsupported constructs mark the program N/A rather than failing the batch
    if let Err(e) = parse_program(&unit) {
        let status = match e {
            FrontendError::UnsupportedConstruct { .. } => ProgramStatus::NotApplicable(e.to_string()),
            _ => ProgramStatus::Error(e.to_string()),
        };
        return finish(status, vec![]);
    }
    let locator = match resolve_locator(&unit, program, None) {
        Ok(l) => l,
        Err(e) => return finish(ProgramStatus::Error(e), vec![]),
    };
    let provider = match build_provider(resolved, program) {
        Ok(p) => p,
        Err(e) => return finish(ProgramStatus::Error(e), vec![]),
    };
    let backend = match build_backend(resolved, program) {
        Ok(b) => b,
        Err(e) => return finish(ProgramStatus::Error(e), vec![]),
    };

    let shots = ShotLibrary::default();
    let pipeline = Pipeline::new(&*provider, &*backend, &shots, resolved.run_cfg.clone());
    let mut results = Vec::new();
    for _ in 0..repeats {
        match pipeline.run(&unit, &locator) {
            Ok(report) => results.push(RepeatResult::from_report(&report)),
            Err(failure) => {
                return finish(ProgramStatus::Error(failure.to_string()), results);
            }
        }
    }
    finish(ProgramStatus::Ran, results)
}

fn cmd_bench(args: BenchArgs) -> i32 {
    let resolved = match resolve(&args.common) {
        Ok(r) => r,
        Err(e) => return config_error(&e),
    };
    let repeats = args.repeats.unwrap_or(1).max(1);
    let jobs = args.jobs.unwrap_or(1).max(1);
    let programs = match discover_programs(&args.corpus) {
        Ok(p) => p,
        Err(e) => return config_error(&e),
    };

    let results: Vec<ProgramResult> = if jobs == 1 {
        programs
            .iter()
            .map(|p| bench_one(&resolved, &args.corpus, p, repeats))
            .collect()
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<ProgramResult>>> =
            programs.iter().map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..jobs.min(programs.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= programs.len() {
                        break;
                    }
                    let result = bench_one(&resolved, &args.corpus, &programs[i], repeats);
                    *slots[i].lock().unwrap() = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().unwrap().expect("worker filled slot"))
            .collect()
    };

    let report = BatchReport {
        repeats,
        programs: results,
    };
    let include_timings = resolved.include_timings();
    let text = emit_batch_report(&report, ReportFormat::Text, include_timings);
    print!("{text}");
    if let Some(path) = &args.report {
        if let Err(e) = write_or_report(path, &text) {
            return config_error(&e);
        }
    }
    if let Some(path) = &args.csv {
        let csv = emit_batch_report(&report, ReportFormat::Csv, include_timings);
        if let Err(e) = write_or_report(path, &csv) {
            return config_error(&e);
        }
    }
    if report.all_green() {
        0
    } else {
        1
    }
}

fn cmd_graph(args: GraphArgs) -> i32 {
    let unit = match SourceUnit::from_file(&args.input) {
        Ok(u) => u,
        Err(e) => return config_error(&e.to_string()),
    };
    let ast = match parse_program(&unit) {
        Ok(a) => a,
        Err(e) => return config_error(&e.to_string()),
    };
    let root = if let Some(line) = args.assert_line {
        match locate_assertion(&ast, &AssertionLocator::at_line(line)) {
            Ok(f) => f,
            Err(e) => return config_error(&e.to_string()),
        }
    } else if ast.assertions().len() == 1 {
        let line = ast.node(ast.assertions()[0]).span.start_line;
        match locate_assertion(&ast, &AssertionLocator::at_line(line)) {
            Ok(f) => f,
            Err(e) => return config_error(&e.to_string()),
        }
    } else if let Some(main) = ast.function_named("main") {
        main
    } else if let Some(first) = ast.function_defs().first().copied() {
        first
    } else {
        return config_error("program has no function definitions");
    };
    let graph = match build_extended_call_graph(&ast, root) {
        Ok(g) => g,
        Err(e) => return config_error(&e.to_string()),
    };
    let dot = graph.to_dot();
    match &args.out {
        Some(path) => {
            if let Err(e) = write_or_report(path, &dot) {
                return config_error(&e);
            }
        }
        None => print!("{dot}"),
    }
    0
}

fn config_error(message: &str) -> i32 {
    eprintln!("error: {message}");
    2
}
