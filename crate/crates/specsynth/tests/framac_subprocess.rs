//! Subprocess mechanics of the Frama-C backend, driven by fake binaries so
//! the tests run without a Frama-C install: output parsing end to end,
//! timeout containment, and the unavailable-binary error.

use specsynth::acsl::ClauseKind;
use specsynth::annotate::ClauseLine;
use specsynth::verify::framac::{FramaCBackend, FramaCConfig};
use specsynth::verify::{
    BackendError, CheckMode, ClauseRef, Outcome, VerificationRequest, VerifierBackend,
};
use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::time::{Duration, Instant};

fn fake_binary(dir: &Path, body: &str) -> FramaCConfig {
    let path = dir.join("fake-frama-c");
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    let mut perms = std::fs::metadata(&path).unwrap().permissions();
    perms.set_mode(0o755);
    std::fs::set_permissions(&path, perms).unwrap();
    FramaCConfig {
        binary: path,
        prover: "alt-ergo".into(),
        scratch_dir: Some(dir.to_path_buf()),
    }
}

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

fn request(mode: CheckMode, timeout_s: u64) -> VerificationRequest {
    VerificationRequest {
        program_text: "int main() { return 0; }\n".into(),
        mode,
        target_assertion: None,
        assertion_line: Some(9),
        timeout: Duration::from_secs(timeout_s),
        annotations: vec![
            ann("f", 0, ClauseKind::Requires, "n > 0", 2),
            ann("f", 1, ClauseKind::Ensures, "\\result >= n", 3),
        ],
        scope: None,
    }
}

#[test]
fn proved_run_parses_clean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fake_binary(
        dir.path(),
        "echo '[wp] 4 goals scheduled'\necho '[wp] Proved goals:   4 / 4'",
    );
    let backend = FramaCBackend::new(cfg);
    let verdict = backend.check(&request(CheckMode::Adequacy, 5)).unwrap();
    assert_eq!(verdict.overall, Outcome::Proved);
    assert!(verdict.assertion_proved());
}

#[test]
fn failing_goal_is_attributed_by_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fake_binary(
        dir.path(),
        "echo 'Goal typed_f_ensures (file x.c, line 3):'\n\
         echo '[wp] [Alt-Ergo] Goal typed_f_ensures : Unsuccess'\n\
         echo '[wp] Proved goals: 1 / 2'",
    );
    let backend = FramaCBackend::new(cfg);
    let verdict = backend
        .check(&request(CheckMode::Satisfiability, 5))
        .unwrap();
    assert_eq!(verdict.overall, Outcome::Failed);
    assert_eq!(
        verdict.first_unproved_clause(),
        Some(&ClauseRef {
            owner: "f".into(),
            index: 1
        })
    );
}

#[test]
fn kernel_error_round_trips_as_compile_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fake_binary(
        dir.path(),
        "echo '[kernel] x.c:2: syntax error: unexpected token' >&2\nexit 1",
    );
    let backend = FramaCBackend::new(cfg);
    let verdict = backend.check(&request(CheckMode::Legality, 5)).unwrap();
    assert_eq!(verdict.overall, Outcome::CompileError);
    assert_eq!(
        verdict.first_unproved_clause(),
        Some(&ClauseRef {
            owner: "f".into(),
            index: 0
        })
    );
}

#[test]
fn timeout_is_contained_within_two_extra_seconds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fake_binary(dir.path(), "sleep 30");
    let backend = FramaCBackend::new(cfg);
    let started = Instant::now();
    let verdict = backend.check(&request(CheckMode::Adequacy, 1)).unwrap();
    let elapsed = started.elapsed();
    assert_eq!(verdict.overall, Outcome::Timeout);
    assert!(
        elapsed < Duration::from_secs(3),
        "check took {elapsed:?}, must stay within timeout + 2s"
    );
}

#[test]
fn missing_binary_reports_unavailable() {
    let backend = FramaCBackend::new(FramaCConfig {
        binary: "/nonexistent/frama-c-missing".into(),
        prover: "alt-ergo".into(),
        scratch_dir: None,
    });
    let err = backend.check(&request(CheckMode::Adequacy, 2)).unwrap_err();
    assert!(matches!(err, BackendError::Unavailable(_)));
}

#[test]
fn wp_arguments_are_passed_for_proof_modes() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("args.log");
    let cfg = fake_binary(
        dir.path(),
        &format!("echo \"$@\" > {}\necho '[wp] Proved goals: 1 / 1'", log.display()),
    );
    let backend = FramaCBackend::new(cfg);
    backend.check(&request(CheckMode::Adequacy, 7)).unwrap();
    let args = std::fs::read_to_string(&log).unwrap();
    assert!(args.contains("-wp "));
    assert!(args.contains("-wp-prover alt-ergo"));
    assert!(args.contains("-wp-timeout 7"));
    assert!(args.trim_end().ends_with(".c"));

    // legality runs the kernel alone
    backend.check(&request(CheckMode::Legality, 7)).unwrap();
    let args = std::fs::read_to_string(&log).unwrap();
    assert!(!args.contains("-wp "));
}
