//! Frama-C/WP subprocess backend.
//!
//! Legality runs the kernel alone (`frama-c <file>`), which parses the C and
//! typechecks the ACSL annotations. Satisfiability and adequacy run the WP
//! plugin (`frama-c -wp -wp-prover <prover> -wp-timeout <s> <file>`).
//! Per-goal results are parsed from the report and joined to clauses by the
//! annotation source line recorded at render time; goal names are used as a
//! fallback join key. A goal that cannot be attributed is kept as `Unknown`
//! rather than failing the check.

use super::{
    BackendError, CheckMode, ClauseRef, GoalRef, GoalStatus, Outcome, VerificationRequest,
    Verdict, VerifierBackend,
};
use std::io::Read;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct FramaCConfig {
    /// Binary to invoke; override for testing or non-PATH installs.
    pub binary: PathBuf,
    pub prover: String,
    /// Where temp files go; defaults to the system temp dir.
    pub scratch_dir: Option<PathBuf>,
}

impl Default for FramaCConfig {
    fn default() -> Self {
        FramaCConfig {
            binary: PathBuf::from("frama-c"),
            prover: "alt-ergo".into(),
            scratch_dir: None,
        }
    }
}

pub struct FramaCBackend {
    cfg: FramaCConfig,
}

impl FramaCBackend {
    pub fn new(cfg: FramaCConfig) -> Self {
        FramaCBackend { cfg }
    }

    /// True when the configured binary answers `-version`.
    pub fn available(cfg: &FramaCConfig) -> bool {
        Command::new(&cfg.binary)
            .arg("-version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map(|s| s.success())
            .unwrap_or(false)
    }

    fn scratch_file(&self, text: &str) -> Result<tempfile::NamedTempFile, BackendError> {
        let mut builder = tempfile::Builder::new();
        builder.prefix("specsynth_").suffix(".c");
        let file = match &self.cfg.scratch_dir {
            Some(dir) => builder.tempfile_in(dir)?,
            None => builder.tempfile()?,
        };
        std::fs::write(file.path(), text)?;
        Ok(file)
    }
}

impl VerifierBackend for FramaCBackend {
    fn check(&self, req: &VerificationRequest) -> Result<Verdict, BackendError> {
        let file = self.scratch_file(&req.program_text)?;
        let mut cmd = Command::new(&self.cfg.binary);
        match req.mode {
            CheckMode::Legality => {
                cmd.arg(file.path());
            }
            CheckMode::Satisfiability | CheckMode::Adequacy => {
                cmd.arg("-wp")
                    .arg("-wp-prover")
                    .arg(&self.cfg.prover)
                    .arg("-wp-timeout")
                    .arg(req.timeout.as_secs().max(1).to_string())
                    .arg(file.path());
            }
        }
        cmd.stdout(Stdio::piped()).stderr(Stdio::piped());
        // own process group, so a deadline kill also reaches spawned provers
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }

        let mut child = cmd.spawn().map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                BackendError::Unavailable(format!(
                    "{} not found; install Frama-C or select the mock verifier",
                    self.cfg.binary.display()
                ))
            } else {
                BackendError::Io(e)
            }
        })?;

        // read pipes off-thread; a blocking read here would outlive the kill
        // while any grandchild keeps the pipe open
        let stdout = child.stdout.take();
        let stderr = child.stderr.take();
        let drain = |pipe: Option<std::process::ChildStdout>, pipe_err: Option<std::process::ChildStderr>| {
            std::thread::spawn(move || {
                let mut s = String::new();
                if let Some(mut p) = pipe {
                    let _ = p.read_to_string(&mut s);
                }
                if let Some(mut p) = pipe_err {
                    let _ = p.read_to_string(&mut s);
                }
                s
            })
        };
        let out_thread = drain(stdout, None);
        let err_thread = drain(None, stderr);

        // hard deadline keeps the +2s wall-clock containment contract
        let deadline = Instant::now() + req.timeout + Duration::from_millis(1500);
        let status = loop {
            match child.try_wait()? {
                Some(status) => break Some(status),
                None => {
                    if Instant::now() >= deadline {
                        kill_tree(&mut child);
                        let _ = child.wait();
                        break None;
                    }
                    std::thread::sleep(Duration::from_millis(25));
                }
            }
        };

        let mut output = out_thread.join().unwrap_or_default();
        output.push_str(&err_thread.join().unwrap_or_default());

        let Some(status) = status else {
            return Ok(Verdict {
                overall: Outcome::Timeout,
                goals: vec![],
                diagnostics: format!("verifier exceeded {}s budget and was killed", req.timeout.as_secs()),
            });
        };

        Ok(parse_output(req, &output, status.success()))
    }
}

/// Kill the child's whole process group (falling back to the child alone),
/// so prover subprocesses die with it and the output pipes close.
fn kill_tree(child: &mut Child) {
    #[cfg(unix)]
    {
        let _ = Command::new("kill")
            .args(["-KILL", "--", &format!("-{}", child.id())])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status();
    }
    let _ = child.kill();
}

fn parse_output(req: &VerificationRequest, output: &str, exit_ok: bool) -> Verdict {
    // compile errors take precedence over everything else
    if let Some(diag) = find_kernel_error(output) {
        let blamed = diag
            .line
            .and_then(|line| attribute_line(req, line))
            .map(|g| vec![(g, GoalStatus::Unproved)])
            .unwrap_or_else(|| vec![(GoalRef::Unknown, GoalStatus::Unproved)]);
        return Verdict {
            overall: Outcome::CompileError,
            goals: blamed,
            diagnostics: diag.text,
        };
    }

    if req.mode == CheckMode::Legality {
        return if exit_ok {
            Verdict::proved(
                req.annotations
                    .iter()
                    .map(|a| {
                        (
                            GoalRef::Clause(ClauseRef {
                                owner: a.owner.clone(),
                                index: a.index,
                            }),
                            GoalStatus::Proved,
                        )
                    })
                    .collect(),
            )
        } else {
            Verdict {
                overall: Outcome::CompileError,
                goals: vec![(GoalRef::Unknown, GoalStatus::Unproved)],
                diagnostics: last_lines(output, 5),
            }
        };
    }

    let mut goals: Vec<(GoalRef, GoalStatus)> = Vec::new();
    let lines_by_name = goal_lines_by_name(output);
    for (name, status) in goal_statuses(output) {
        let goal = lines_by_name
            .get(&name)
            .and_then(|line| attribute_line(req, *line))
            .or_else(|| attribute_name(req, &name))
            .unwrap_or(GoalRef::Unknown);
        goals.push((goal, status));
    }

    let tally = proved_tally(output);
    let tally_failed = matches!(tally, Some((proved, total)) if proved < total);
    if tally_failed && goals.is_empty() {
        // something failed but the report carried no per-goal lines
        goals.push((GoalRef::Unknown, GoalStatus::Unproved));
    }
    let clause_failed = goals.iter().any(|(g, s)| {
        *s == GoalStatus::Unproved && matches!(g, GoalRef::Clause(_) | GoalRef::Unknown)
    });
    let assertion_failed = goals
        .iter()
        .any(|(g, s)| *g == GoalRef::TargetAssertion && *s == GoalStatus::Unproved);

    let all_proved = match tally {
        Some((proved, total)) => proved == total,
        None => exit_ok && !clause_failed && !assertion_failed,
    };

    let overall = match req.mode {
        // the assertion goal does not gate satisfiability
        CheckMode::Satisfiability => {
            if clause_failed {
                Outcome::Failed
            } else {
                Outcome::Proved
            }
        }
        CheckMode::Adequacy => {
            if all_proved && !clause_failed && !assertion_failed {
                Outcome::Proved
            } else {
                Outcome::Failed
            }
        }
        CheckMode::Legality => unreachable!("handled above"),
    };

    if req.mode == CheckMode::Adequacy
        && !goals.iter().any(|(g, _)| *g == GoalRef::TargetAssertion)
    {
        goals.push((
            GoalRef::TargetAssertion,
            if overall == Outcome::Proved {
                GoalStatus::Proved
            } else {
                GoalStatus::Unproved
            },
        ));
    }

    Verdict {
        overall,
        goals,
        diagnostics: if overall == Outcome::Proved {
            String::new()
        } else {
            last_lines(output, 8)
        },
    }
}

struct KernelDiag {
    line: Option<u32>,
    text: String,
}

fn find_kernel_error(output: &str) -> Option<KernelDiag> {
    for line in output.lines() {
        let lower = line.to_ascii_lowercase();
        let is_error = lower.contains("[kernel]")
            && (lower.contains("error") || lower.contains("cannot"))
            || lower.contains("syntax error");
        if is_error {
            return Some(KernelDiag {
                line: extract_line_number(line),
                text: line.trim().to_string(),
            });
        }
    }
    None
}

/// `file.c:12:` or `line 12` style positions.
fn extract_line_number(text: &str) -> Option<u32> {
    if let Some(at) = text.find(".c:") {
        let rest = &text[at + 3..];
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        if let Ok(n) = digits.parse() {
            return Some(n);
        }
    }
    if let Some(at) = text.find("line ") {
        let rest = &text[at + 5..];
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        if let Ok(n) = digits.parse() {
            return Some(n);
        }
    }
    None
}

/// `Goal <name> (file <f>, line <N>)` bindings from verbose goal output.
fn goal_lines_by_name(output: &str) -> std::collections::BTreeMap<String, u32> {
    let mut map = std::collections::BTreeMap::new();
    for line in output.lines() {
        let Some(at) = line.find("Goal ") else { continue };
        let rest = &line[at + 5..];
        let Some(paren) = rest.find('(') else { continue };
        let name = rest[..paren].trim().trim_end_matches(':').trim();
        if name.is_empty() {
            continue;
        }
        if let Some(n) = extract_line_number(&rest[paren..]) {
            map.insert(name.to_string(), n);
        }
    }
    map
}

/// `Goal <name> : <Status>` result lines.
fn goal_statuses(output: &str) -> Vec<(String, GoalStatus)> {
    let mut out = Vec::new();
    for line in output.lines() {
        let Some(at) = line.find("Goal ") else { continue };
        let rest = &line[at + 5..];
        let Some(colon) = rest.find(" : ") else { continue };
        let name = rest[..colon].trim().to_string();
        let status_word = rest[colon + 3..]
            .split_whitespace()
            .next()
            .unwrap_or("")
            .trim_end_matches(['.', ',']);
        let status = if status_word.eq_ignore_ascii_case("valid")
            || status_word.eq_ignore_ascii_case("proved")
        {
            GoalStatus::Proved
        } else {
            GoalStatus::Unproved
        };
        out.push((name, status));
    }
    out
}

/// `Proved goals: X / Y`.
fn proved_tally(output: &str) -> Option<(u32, u32)> {
    for line in output.lines() {
        let Some(at) = line.find("Proved goals:") else { continue };
        let rest = &line[at + "Proved goals:".len()..];
        let parts: Vec<&str> = rest.split('/').collect();
        if parts.len() == 2 {
            let proved = parts[0].trim().parse().ok()?;
            let total = parts[1].trim().parse().ok()?;
            return Some((proved, total));
        }
    }
    None
}

fn attribute_line(req: &VerificationRequest, line: u32) -> Option<GoalRef> {
    if req.assertion_line == Some(line) {
        return Some(GoalRef::TargetAssertion);
    }
    req.annotations
        .iter()
        .find(|a| a.line == line)
        .map(|a| {
            GoalRef::Clause(ClauseRef {
                owner: a.owner.clone(),
                index: a.index,
            })
        })
}

/// Fallback attribution from WP goal names like `typed_swap_ensures` or
/// `typed_bubbleSort_loop_invariant_2_preserved`.
fn attribute_name(req: &VerificationRequest, name: &str) -> Option<GoalRef> {
    let lower = name.to_ascii_lowercase();
    if lower.contains("assert") {
        return Some(GoalRef::TargetAssertion);
    }
    let kind_tag: &[(&str, crate::acsl::ClauseKind)] = &[
        ("loop_invariant", crate::acsl::ClauseKind::LoopInvariant),
        ("loop_assigns", crate::acsl::ClauseKind::LoopAssigns),
        ("requires", crate::acsl::ClauseKind::Requires),
        ("ensures", crate::acsl::ClauseKind::Ensures),
        ("assigns", crate::acsl::ClauseKind::Assigns),
    ];
    for (tag, kind) in kind_tag {
        if !lower.contains(tag) {
            continue;
        }
        // ordinal suffix, 1-based among same-kind goals of the function
        let ordinal: usize = lower
            .split('_')
            .rev()
            .find_map(|part| part.parse::<usize>().ok())
            .unwrap_or(1);
        let candidates: Vec<&crate::annotate::ClauseLine> = req
            .annotations
            .iter()
            .filter(|a| a.kind == *kind && lower.contains(&owner_function(&a.owner).to_ascii_lowercase()))
            .collect();
        let pick = candidates.get(ordinal.saturating_sub(1)).or(candidates.first())?;
        return Some(GoalRef::Clause(ClauseRef {
            owner: pick.owner.clone(),
            index: pick.index,
        }));
    }
    None
}

fn owner_function(owner: &str) -> &str {
    owner.split(".loop").next().unwrap_or(owner)
}

fn last_lines(output: &str, n: usize) -> String {
    let lines: Vec<&str> = output.lines().filter(|l| !l.trim().is_empty()).collect();
    let start = lines.len().saturating_sub(n);
    lines[start..].join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acsl::ClauseKind;
    use crate::annotate::ClauseLine;
    use std::time::Duration;

    fn ann(owner: &str, index: usize, kind: ClauseKind, expr: &str, line: u32) -> ClauseLine {
        ClauseLine {
            owner: owner.into(),
            index,
            kind,
            normalized: format!("{} {}", kind.keyword(), expr),
            expr_normalized: expr.into(),
            line,
        }
    }

    fn request(mode: CheckMode) -> VerificationRequest {
        VerificationRequest {
            program_text: "int main(){return 0;}\n".into(),
            mode,
            target_assertion: None,
            assertion_line: Some(10),
            timeout: Duration::from_secs(2),
            annotations: vec![
                ann("swap", 0, ClauseKind::Requires, "\\valid(a)", 2),
                ann("swap", 1, ClauseKind::Ensures, "*a == \\old(*b)", 3),
            ],
            scope: None,
        }
    }

    #[test]
    fn parses_all_valid_tally() {
        let out = "[wp] Proved goals:   4 / 4\n";
        let verdict = parse_output(&request(CheckMode::Adequacy), out, true);
        assert_eq!(verdict.overall, Outcome::Proved);
        assert!(verdict.assertion_proved());
    }

    #[test]
    fn parses_failed_goal_with_line_attribution() {
        let out = "\
Goal typed_swap_ensures (file /tmp/x.c, line 3):
[wp] [Alt-Ergo] Goal typed_swap_ensures : Unsuccess
[wp] Proved goals:   3 / 4
";
        let verdict = parse_output(&request(CheckMode::Satisfiability), out, true);
        assert_eq!(verdict.overall, Outcome::Failed);
        assert_eq!(
            verdict.first_unproved_clause(),
            Some(&ClauseRef {
                owner: "swap".into(),
                index: 1
            })
        );
    }

    #[test]
    fn name_fallback_attribution() {
        let out = "[wp] [Alt-Ergo] Goal typed_swap_requires : Timeout\n[wp] Proved goals: 1 / 2\n";
        let verdict = parse_output(&request(CheckMode::Satisfiability), out, true);
        assert_eq!(
            verdict.first_unproved_clause(),
            Some(&ClauseRef {
                owner: "swap".into(),
                index: 0
            })
        );
    }

    #[test]
    fn kernel_error_maps_to_compile_error() {
        let out = "[kernel] /tmp/x.c:3: syntax error: unexpected token ';'\n";
        let verdict = parse_output(&request(CheckMode::Legality), out, false);
        assert_eq!(verdict.overall, Outcome::CompileError);
        assert_eq!(
            verdict.first_unproved_clause(),
            Some(&ClauseRef {
                owner: "swap".into(),
                index: 1
            })
        );
    }

    #[test]
    fn unattributable_goal_becomes_unknown() {
        let out = "[wp] [Alt-Ergo] Goal typed_mystery_thing : Unsuccess\n[wp] Proved goals: 0 / 1\n";
        let verdict = parse_output(&request(CheckMode::Adequacy), out, true);
        assert_eq!(verdict.overall, Outcome::Failed);
        assert!(verdict
            .goals
            .iter()
            .any(|(g, _)| *g == GoalRef::Unknown));
    }

    #[test]
    fn assertion_line_attribution_wins() {
        let out = "\
Goal typed_main_assert (file /tmp/x.c, line 10):
[wp] [Alt-Ergo] Goal typed_main_assert : Unsuccess
[wp] Proved goals: 3 / 4
";
        let verdict = parse_output(&request(CheckMode::Adequacy), out, true);
        assert_eq!(verdict.overall, Outcome::Failed);
        assert!(!verdict.assertion_proved());
        // no clause is blamed: the assertion itself failed
        assert_eq!(verdict.first_unproved_clause(), None);
    }
}
