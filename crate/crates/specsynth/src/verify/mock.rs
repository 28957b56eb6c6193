//! Deterministic test-double backend driven by declarative rule tables.
//!
//! A rule table names the clause texts that are illegal, the texts that are
//! unsatisfiable, and the clause subsets that suffice to prove the target
//! assertion. Verdicts are computed from the table and the clause/line map
//! alone, so identical requests always produce identical verdicts. Every
//! check is appended to a call log that tests inspect, e.g. to prove that
//! no satisfiability check is ever issued for a non-outermost loop.

use super::{
    BackendError, CheckMode, ClauseRef, GoalRef, GoalStatus, Outcome, VerificationRequest,
    Verdict, VerifierBackend,
};
use crate::acsl::normalize;
use crate::annotate::ClauseLine;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Mutex;

/// Declarative verdict rules for one fixture program.
///
/// Rule entries match a clause when they equal either its full normalized
/// text (`keyword expression`) or just the normalized expression.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RuleTable {
    #[serde(default)]
    pub illegal: Vec<String>,
    #[serde(default)]
    pub unsat: Vec<String>,
    /// The assertion is provable when every entry of at least one subset is
    /// matched by a present clause. An empty list means never provable.
    #[serde(default)]
    pub adequate_subsets: Vec<Vec<String>>,
}

impl RuleTable {
    fn normalized(mut self) -> Self {
        for rule in self.illegal.iter_mut().chain(self.unsat.iter_mut()) {
            *rule = normalize(rule);
        }
        for subset in &mut self.adequate_subsets {
            for rule in subset.iter_mut() {
                *rule = normalize(rule);
            }
        }
        self
    }
}

fn rule_matches(rule: &str, ann: &ClauseLine) -> bool {
    rule == ann.normalized || rule == ann.expr_normalized
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckRecord {
    pub mode: CheckMode,
    pub scope: Option<String>,
}

pub struct MockOracle {
    rules: RuleTable,
    log: Mutex<Vec<CheckRecord>>,
}

impl MockOracle {
    pub fn new(rules: RuleTable) -> Self {
        MockOracle {
            rules: rules.normalized(),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Load a rule table from its JSON sidecar file.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| BackendError::UnknownFixture(path.display().to_string()))?;
        let rules: RuleTable = serde_json::from_str(&text)
            .map_err(|e| BackendError::UnknownFixture(format!("{}: {e}", path.display())))?;
        Ok(Self::new(rules))
    }

    pub fn rules(&self) -> &RuleTable {
        &self.rules
    }

    pub fn log(&self) -> Vec<CheckRecord> {
        self.log.lock().unwrap().clone()
    }

    pub fn clear_log(&self) {
        self.log.lock().unwrap().clear();
    }

    fn first_match<'a>(
        &self,
        rules: &[String],
        anns: &'a [ClauseLine],
    ) -> Option<&'a ClauseLine> {
        anns.iter()
            .find(|ann| rules.iter().any(|r| rule_matches(r, ann)))
    }

    fn clause_goals(&self, anns: &[ClauseLine]) -> Vec<(GoalRef, GoalStatus)> {
        anns.iter()
            .map(|ann| {
                let unsat = self.rules.unsat.iter().any(|r| rule_matches(r, ann));
                (
                    GoalRef::Clause(ClauseRef {
                        owner: ann.owner.clone(),
                        index: ann.index,
                    }),
                    if unsat {
                        GoalStatus::Unproved
                    } else {
                        GoalStatus::Proved
                    },
                )
            })
            .collect()
    }

    fn assertion_covered(&self, anns: &[ClauseLine]) -> bool {
        self.rules.adequate_subsets.iter().any(|subset| {
            subset
                .iter()
                .all(|rule| anns.iter().any(|ann| rule_matches(rule, ann)))
        })
    }
}

impl VerifierBackend for MockOracle {
    fn check(&self, req: &VerificationRequest) -> Result<Verdict, BackendError> {
        self.log.lock().unwrap().push(CheckRecord {
            mode: req.mode,
            scope: req.scope.clone(),
        });

        let anns = &req.annotations;
        if let Some(bad) = self.first_match(&self.rules.illegal, anns) {
            return Ok(Verdict {
                overall: Outcome::CompileError,
                goals: vec![(
                    GoalRef::Clause(ClauseRef {
                        owner: bad.owner.clone(),
                        index: bad.index,
                    }),
                    GoalStatus::Unproved,
                )],
                diagnostics: format!("illegal specification at line {}: {}", bad.line, bad.normalized),
            });
        }

        match req.mode {
            CheckMode::Legality => Ok(Verdict::proved(
                anns.iter()
                    .map(|ann| {
                        (
                            GoalRef::Clause(ClauseRef {
                                owner: ann.owner.clone(),
                                index: ann.index,
                            }),
                            GoalStatus::Proved,
                        )
                    })
                    .collect(),
            )),
            CheckMode::Satisfiability => {
                let goals = self.clause_goals(anns);
                let failed = goals.iter().any(|(_, s)| *s == GoalStatus::Unproved);
                Ok(Verdict {
                    overall: if failed { Outcome::Failed } else { Outcome::Proved },
                    goals,
                    diagnostics: String::new(),
                })
            }
            CheckMode::Adequacy => {
                let mut goals = self.clause_goals(anns);
                let covered = self.assertion_covered(anns);
                goals.push((
                    GoalRef::TargetAssertion,
                    if covered {
                        GoalStatus::Proved
                    } else {
                        GoalStatus::Unproved
                    },
                ));
                let failed = goals.iter().any(|(_, s)| *s == GoalStatus::Unproved);
                Ok(Verdict {
                    overall: if failed { Outcome::Failed } else { Outcome::Proved },
                    goals,
                    diagnostics: if covered {
                        String::new()
                    } else {
                        "target assertion not covered by retained specifications".into()
                    },
                })
            }
        }
    }
}
