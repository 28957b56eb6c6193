//! Verifier backends: legality, satisfiability, and adequacy checks.
//!
//! A backend receives rendered annotated C plus the clause/line map produced
//! at render time and reports per-goal outcomes attributed back to clauses.
//! Two backends ship: a Frama-C/WP subprocess adapter and a deterministic
//! mock oracle driven by declarative rule tables for offline runs and tests.

pub mod framac;
pub mod mock;

use crate::annotate::ClauseLine;
use crate::frontend::AssertionLocator;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("verifier backend unavailable: {0}")]
    Unavailable(String),
    #[error("unknown fixture: {0}")]
    UnknownFixture(String),
    #[error("verifier io failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    Legality,
    Satisfiability,
    Adequacy,
}

impl std::fmt::Display for CheckMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckMode::Legality => f.write_str("legality"),
            CheckMode::Satisfiability => f.write_str("satisfiability"),
            CheckMode::Adequacy => f.write_str("adequacy"),
        }
    }
}

/// A clause position inside an annotated program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClauseRef {
    pub owner: String,
    pub index: usize,
}

#[derive(Debug, Clone)]
pub struct VerificationRequest {
    pub program_text: String,
    pub mode: CheckMode,
    /// Required for adequacy checks.
    pub target_assertion: Option<AssertionLocator>,
    /// Line of the target assertion in `program_text`.
    pub assertion_line: Option<u32>,
    pub timeout: Duration,
    /// Clause/line map recorded at render time.
    pub annotations: Vec<ClauseLine>,
    /// Node whose validation issued this check; recorded in backend call
    /// logs so deferral behavior is observable.
    pub scope: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Proved,
    Failed,
    CompileError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoalRef {
    Clause(ClauseRef),
    TargetAssertion,
    /// A reported goal that could not be attributed to any clause.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalStatus {
    Proved,
    Unproved,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub overall: Outcome,
    /// Goals in source order.
    pub goals: Vec<(GoalRef, GoalStatus)>,
    pub diagnostics: String,
}

impl Verdict {
    pub fn proved(goals: Vec<(GoalRef, GoalStatus)>) -> Self {
        Verdict {
            overall: Outcome::Proved,
            goals,
            diagnostics: String::new(),
        }
    }

    /// First unproved clause goal in source order — the deterministic blame
    /// choice when several goals fail.
    pub fn first_unproved_clause(&self) -> Option<&ClauseRef> {
        self.goals.iter().find_map(|(goal, status)| match (goal, status) {
            (GoalRef::Clause(c), GoalStatus::Unproved) => Some(c),
            _ => None,
        })
    }

    pub fn assertion_proved(&self) -> bool {
        self.goals
            .iter()
            .any(|(g, s)| *g == GoalRef::TargetAssertion && *s == GoalStatus::Proved)
    }
}

pub trait VerifierBackend: Send + Sync {
    fn check(&self, req: &VerificationRequest) -> Result<Verdict, BackendError>;
}
