//! Run and batch report data plus text/CSV emission.
//!
//! Offline runs (fixture provider + mock oracle) must produce byte-identical
//! reports, so wall-clock columns are redacted unless timings are explicitly
//! requested; everything else in a report is deterministic.

use crate::pipeline::RunReport;
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

/// Outcome of one repeat of one program.
#[derive(Debug, Clone)]
pub struct RepeatResult {
    pub success: bool,
    pub iterations: Option<u32>,
    pub generated: u32,
    pub retained: u32,
    pub total_time: Duration,
    pub query_time: Duration,
    pub validate_time: Duration,
    pub simplify_time: Duration,
}

impl RepeatResult {
    pub fn from_report(report: &RunReport) -> Self {
        RepeatResult {
            success: report.success,
            iterations: report.success.then_some(report.iterations_used),
            generated: report.clauses_generated,
            retained: report.clauses_retained,
            total_time: report.total_time,
            query_time: report.query_time,
            validate_time: report.validate_time,
            simplify_time: report.simplify_time,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ProgramStatus {
    Ran,
    /// The frontend rejected the program (unsupported construct).
    NotApplicable(String),
    /// The run aborted (provider/backend error).
    Error(String),
}

#[derive(Debug, Clone)]
pub struct ProgramResult {
    pub name: String,
    pub category: String,
    pub status: ProgramStatus,
    pub repeats: Vec<RepeatResult>,
}

impl ProgramResult {
    pub fn successes(&self) -> usize {
        self.repeats.iter().filter(|r| r.success).count()
    }
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub repeats: u32,
    pub programs: Vec<ProgramResult>,
}

impl BatchReport {
    /// Programs solved in at least one repeat.
    pub fn solved(&self) -> usize {
        self.programs.iter().filter(|p| p.successes() > 0).count()
    }

    pub fn all_green(&self) -> bool {
        self.programs.iter().all(|p| match p.status {
            ProgramStatus::Ran => p.successes() == p.repeats.len(),
            ProgramStatus::NotApplicable(_) => true,
            ProgramStatus::Error(_) => false,
        })
    }
}

/// Sample mean and standard deviation, in seconds.
pub fn mean_std(times: &[Duration]) -> (f64, f64) {
    if times.is_empty() {
        return (0.0, 0.0);
    }
    let secs: Vec<f64> = times.iter().map(|d| d.as_secs_f64()).collect();
    let mean = secs.iter().sum::<f64>() / secs.len() as f64;
    if secs.len() < 2 {
        return (mean, 0.0);
    }
    let var = secs.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (secs.len() - 1) as f64;
    (mean, var.sqrt())
}

fn fmt_mean_std(times: &[Duration]) -> String {
    let (mean, std) = mean_std(times);
    format!("{mean:.2} \u{b1} {std:.2}")
}

fn join_counts<T: ToString>(values: impl Iterator<Item = T>) -> String {
    let parts: Vec<String> = values.map(|v| v.to_string()).collect();
    if parts.is_empty() {
        "-".into()
    } else {
        parts.join(",")
    }
}

/// Render a batch report.
pub fn emit_batch_report(
    report: &BatchReport,
    format: ReportFormat,
    include_timings: bool,
) -> String {
    match format {
        ReportFormat::Text => emit_batch_text(report, include_timings),
        ReportFormat::Csv => emit_batch_csv(report, include_timings),
    }
}

fn batch_row(program: &ProgramResult, include_timings: bool) -> (String, String, String, String, String, String) {
    match &program.status {
        ProgramStatus::NotApplicable(_) => (
            "N/A".into(),
            "-".into(),
            "-".into(),
            "-".into(),
            "-".into(),
            "-".into(),
        ),
        ProgramStatus::Error(_) => (
            "error".into(),
            "-".into(),
            "-".into(),
            "-".into(),
            "-".into(),
            "-".into(),
        ),
        ProgramStatus::Ran => {
            let success = if program.successes() > 0 { "yes" } else { "no" };
            let ratio = format!("{}/{}", program.successes(), program.repeats.len());
            let iterations = join_counts(
                program
                    .repeats
                    .iter()
                    .map(|r| r.iterations.map(|i| i.to_string()).unwrap_or("-".into())),
            );
            let generated = join_counts(program.repeats.iter().map(|r| r.generated));
            let retained = join_counts(program.repeats.iter().map(|r| r.retained));
            let time = if include_timings {
                let times: Vec<Duration> = program
                    .repeats
                    .iter()
                    .filter(|r| r.success)
                    .map(|r| r.total_time)
                    .collect();
                if times.is_empty() {
                    "-".into()
                } else {
                    fmt_mean_std(&times)
                }
            } else {
                "-".into()
            };
            (success.into(), ratio, iterations, generated, retained, time)
        }
    }
}

fn emit_batch_text(report: &BatchReport, include_timings: bool) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "batch report: {} programs, {} repeats each\n\n",
        report.programs.len(),
        report.repeats
    ));
    out.push_str(&format!(
        "{:<28} {:<16} {:<7} {:<7} {:<14} {:<14} {:<14} {}\n",
        "program", "category", "success", "ratio", "iterations", "generated", "retained", "time(s)"
    ));
    for p in &report.programs {
        let (success, ratio, iterations, generated, retained, time) =
            batch_row(p, include_timings);
        out.push_str(&format!(
            "{:<28} {:<16} {:<7} {:<7} {:<14} {:<14} {:<14} {}\n",
            p.name, p.category, success, ratio, iterations, generated, retained, time
        ));
        if let ProgramStatus::NotApplicable(reason) | ProgramStatus::Error(reason) = &p.status {
            out.push_str(&format!("    note: {reason}\n"));
        }
    }
    out.push_str(&format!(
        "\nsolved: {} / {}\n",
        report.solved(),
        report.programs.len()
    ));
    out
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn emit_batch_csv(report: &BatchReport, include_timings: bool) -> String {
    let mut out = String::from(
        "program,category,status,success,ratio,iterations,generated,retained,time_mean_s,time_std_s\n",
    );
    for p in &report.programs {
        let status = match &p.status {
            ProgramStatus::Ran => "ran",
            ProgramStatus::NotApplicable(_) => "n/a",
            ProgramStatus::Error(_) => "error",
        };
        let (success, ratio, iterations, generated, retained, _) = batch_row(p, include_timings);
        let (mean, std) = if include_timings && matches!(p.status, ProgramStatus::Ran) {
            let times: Vec<Duration> = p
                .repeats
                .iter()
                .filter(|r| r.success)
                .map(|r| r.total_time)
                .collect();
            let (m, s) = mean_std(&times);
            (format!("{m:.2}"), format!("{s:.2}"))
        } else {
            ("-".into(), "-".into())
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            csv_escape(&p.name),
            csv_escape(&p.category),
            status,
            success,
            ratio,
            csv_escape(&iterations),
            csv_escape(&generated),
            csv_escape(&retained),
            mean,
            std,
        ));
    }
    out
}

/// Render a single-run report.
pub fn emit_run_report(
    name: &str,
    report: &RunReport,
    format: ReportFormat,
    include_timings: bool,
) -> String {
    match format {
        ReportFormat::Text => emit_run_text(name, report, include_timings),
        ReportFormat::Csv => emit_run_csv(name, report, include_timings),
    }
}

fn emit_run_text(name: &str, report: &RunReport, include_timings: bool) -> String {
    let mut out = String::new();
    out.push_str(&format!("program: {name}\n"));
    out.push_str(&format!("success: {}\n", report.success));
    out.push_str(&format!("iterations_used: {}\n", report.iterations_used));
    out.push_str(&format!("graph_nodes: {}\n", report.node_count));
    out.push_str(&format!("provider_queries: {}\n", report.query_count));
    out.push_str(&format!("clauses_generated: {}\n", report.clauses_generated));
    out.push_str(&format!("clauses_retained: {}\n", report.clauses_retained));
    if let Some(s) = &report.simplify_stats {
        out.push_str(&format!(
            "simplify: removed={} passes={} checks={}\n",
            s.removed,
            s.passes,
            join_counts(s.checks_per_pass.iter())
        ));
    }
    if !report.unresolved_externals.is_empty() {
        for (node, externals) in &report.unresolved_externals {
            out.push_str(&format!(
                "unresolved_externals: {node}: {}\n",
                externals.join(", ")
            ));
        }
    }
    for trace in &report.traces {
        out.push_str(&format!(
            "iteration {}: adequacy={}\n",
            trace.iteration,
            if trace.adequacy_proved { "proved" } else { "failed" }
        ));
        for node in &trace.per_node {
            out.push_str(&format!(
                "  {:<24} candidates={} dropped={} illegal={} unsat={} retained={}\n",
                node.node,
                node.candidates,
                node.dropped,
                node.eliminated_illegal,
                node.eliminated_unsat,
                node.retained
            ));
        }
    }
    if include_timings {
        out.push_str(&format!(
            "time_s: query={:.3} validate={:.3} simplify={:.3} total={:.3}\n",
            report.query_time.as_secs_f64(),
            report.validate_time.as_secs_f64(),
            report.simplify_time.as_secs_f64(),
            report.total_time.as_secs_f64(),
        ));
    }
    out
}

fn emit_run_csv(name: &str, report: &RunReport, include_timings: bool) -> String {
    let mut out = String::from(
        "program,success,iterations,nodes,queries,generated,retained,query_s,validate_s,simplify_s,total_s\n",
    );
    let (q, v, s, t) = if include_timings {
        (
            format!("{:.3}", report.query_time.as_secs_f64()),
            format!("{:.3}", report.validate_time.as_secs_f64()),
            format!("{:.3}", report.simplify_time.as_secs_f64()),
            format!("{:.3}", report.total_time.as_secs_f64()),
        )
    } else {
        ("-".into(), "-".into(), "-".into(), "-".into())
    };
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{},{}\n",
        csv_escape(name),
        report.success,
        report.iterations_used,
        report.node_count,
        report.query_count,
        report.clauses_generated,
        report.clauses_retained,
        q,
        v,
        s,
        t,
    ));
    out
}
