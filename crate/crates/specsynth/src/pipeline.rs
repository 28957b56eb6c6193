//! The iterative synthesis driver.
//!
//! Each iteration walks the extended call graph bottom-up with an explicit
//! stack: a node is generated only after all of its callees were generated
//! in the same iteration. Candidates go through the legality gate first
//! (compile errors eliminate the blamed clause and the check repeats), then
//! satisfiability: functions are checked immediately, non-outermost loops
//! are deferred, and an outermost loop checks its own clauses together with
//! every deferred inner-loop clause at once. After the sweep an adequacy
//! check decides whether the target assertion is proved; on success the
//! optional simplification pass greedily removes clauses the proof does not
//! need, newest first, until a full pass removes nothing.

use crate::acsl::SpecStatus;
use crate::annotate::{insert_placeholders, AnnotatedProgram};
use crate::callgraph::{build_extended_call_graph, ExtGraph, NodeKind};
use crate::frontend::{locate_assertion, parse_program, AssertionLocator, SourceUnit};
use crate::llm::provider::{ProviderError, QueryKey, SpecProvider};
use crate::llm::{build_prompt, parse_candidates, CandidateSet, LlmError, ShotLibrary};
use crate::verify::{
    BackendError, CheckMode, Outcome, VerificationRequest, VerifierBackend,
};
use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Frontend(#[from] crate::frontend::FrontendError),
    #[error(transparent)]
    Graph(#[from] crate::callgraph::GraphError),
    #[error(transparent)]
    Annotate(#[from] crate::annotate::AnnotateError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

/// A failed run still carries everything produced before the error.
#[derive(Debug)]
pub struct RunFailure {
    pub error: PipelineError,
    pub partial: Box<RunReport>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for RunFailure {}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Iteration bound `t`.
    pub max_iterations: u32,
    pub llm: crate::llm::LlmConfig,
    pub verifier_timeout: Duration,
    pub simplify: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_iterations: 5,
            llm: crate::llm::LlmConfig::default(),
            verifier_timeout: Duration::from_secs(30),
            simplify: true,
        }
    }
}

/// Per-node counters for one iteration. `retained` always equals
/// `candidates - eliminated_illegal - eliminated_unsat`.
#[derive(Debug, Clone, Default)]
pub struct NodeIterationStats {
    pub node: String,
    /// Candidates entering validation (after dedup and re-proposal drops).
    pub candidates: u32,
    /// Re-proposals of already-present or already-eliminated clauses.
    pub dropped: u32,
    pub eliminated_illegal: u32,
    pub eliminated_unsat: u32,
    pub retained: u32,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub iteration: u32,
    /// Stats in generation order.
    pub per_node: Vec<NodeIterationStats>,
    /// Node ids in the order their specifications were generated.
    pub generation_order: Vec<String>,
    pub adequacy_proved: bool,
    pub query_time: Duration,
    pub validate_time: Duration,
    pub simplify_time: Duration,
}

#[derive(Debug, Clone, Default)]
pub struct SimplifyStats {
    pub passes: u32,
    /// Adequacy checks issued per pass.
    pub checks_per_pass: Vec<u32>,
    pub removed: u32,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub success: bool,
    pub iterations_used: u32,
    /// Candidate clauses parsed from provider responses.
    pub clauses_generated: u32,
    /// Clauses in the final annotated program.
    pub clauses_retained: u32,
    pub final_text: String,
    pub final_program: Option<AnnotatedProgram>,
    pub traces: Vec<IterationTrace>,
    pub simplify_stats: Option<SimplifyStats>,
    /// Provider queries issued by this run.
    pub query_count: u32,
    pub node_count: usize,
    pub unresolved_externals: BTreeMap<String, Vec<String>>,
    pub query_time: Duration,
    pub validate_time: Duration,
    pub simplify_time: Duration,
    pub total_time: Duration,
}

#[derive(Clone, Copy)]
enum Phase {
    Query,
    Validate,
    Simplify,
}

/// Partitions the whole run into the three reported phases. Static analysis
/// and orchestration are charged to the validation bucket; they are
/// negligible against real verifier time and this keeps the three buckets
/// summing to total wall time.
struct PhaseClock {
    query: Duration,
    validate: Duration,
    simplify: Duration,
    mark: Instant,
}

impl PhaseClock {
    fn new() -> Self {
        PhaseClock {
            query: Duration::ZERO,
            validate: Duration::ZERO,
            simplify: Duration::ZERO,
            mark: Instant::now(),
        }
    }

    fn charge(&mut self, phase: Phase) {
        let now = Instant::now();
        let delta = now - self.mark;
        self.mark = now;
        match phase {
            Phase::Query => self.query += delta,
            Phase::Validate => self.validate += delta,
            Phase::Simplify => self.simplify += delta,
        }
    }
}

pub struct Pipeline<'a> {
    provider: &'a dyn SpecProvider,
    backend: &'a dyn VerifierBackend,
    shots: &'a ShotLibrary,
    cfg: RunConfig,
}

struct RunState {
    unit: SourceUnit,
    graph: Option<ExtGraph>,
    prog: Option<AnnotatedProgram>,
    traces: Vec<IterationTrace>,
    iterations_used: u32,
    success: bool,
    generated: u32,
    queries: u32,
    simplify_stats: Option<SimplifyStats>,
    clock: PhaseClock,
    started: Instant,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        provider: &'a dyn SpecProvider,
        backend: &'a dyn VerifierBackend,
        shots: &'a ShotLibrary,
        cfg: RunConfig,
    ) -> Self {
        Pipeline {
            provider,
            backend,
            shots,
            cfg,
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    /// Run the full synthesis loop. On error the partial report describes
    /// everything that happened up to the failure.
    pub fn run(
        &self,
        unit: &SourceUnit,
        locator: &AssertionLocator,
    ) -> Result<RunReport, RunFailure> {
        let mut state = RunState {
            unit: unit.clone(),
            graph: None,
            prog: None,
            traces: Vec::new(),
            iterations_used: 0,
            success: false,
            generated: 0,
            queries: 0,
            simplify_stats: None,
            clock: PhaseClock::new(),
            started: Instant::now(),
        };
        let result = self.run_inner(locator, &mut state);
        state.clock.charge(Phase::Validate);
        let report = Self::report_from(state);
        match result {
            Ok(()) => Ok(report),
            Err(error) => Err(RunFailure {
                error,
                partial: Box::new(report),
            }),
        }
    }

    fn report_from(state: RunState) -> RunReport {
        let total_time = state.started.elapsed();
        let final_text = state
            .prog
            .as_ref()
            .map(|p| p.render())
            .unwrap_or_else(|| state.unit.text.clone());
        RunReport {
            success: state.success,
            iterations_used: state.iterations_used,
            clauses_generated: state.generated,
            clauses_retained: state
                .prog
                .as_ref()
                .map(|p| p.clause_count() as u32)
                .unwrap_or(0),
            final_text,
            node_count: state.graph.as_ref().map(|g| g.nodes().len()).unwrap_or(0),
            unresolved_externals: state
                .graph
                .as_ref()
                .map(|g| g.all_unresolved().clone())
                .unwrap_or_default(),
            final_program: state.prog,
            traces: state.traces,
            simplify_stats: state.simplify_stats,
            query_count: state.queries,
            query_time: state.clock.query,
            validate_time: state.clock.validate,
            simplify_time: state.clock.simplify,
            total_time,
        }
    }

    fn run_inner(
        &self,
        locator: &AssertionLocator,
        state: &mut RunState,
    ) -> Result<(), PipelineError> {
        let ast = parse_program(&state.unit)?;
        let root_fn = locate_assertion(&ast, locator)?;
        let graph = build_extended_call_graph(&ast, root_fn)?;
        let prog = insert_placeholders(&state.unit, &ast, &graph);
        state.graph = Some(graph);
        state.prog = Some(prog);
        state.clock.charge(Phase::Validate);

        // clause texts eliminated per node; re-proposals are dropped before
        // validation to avoid livelock on a stubborn provider
        let mut eliminated: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();

        for iteration in 1..=self.cfg.max_iterations {
            state.iterations_used = iteration;
            let (q0, v0) = (state.clock.query, state.clock.validate);
            let mut stats: BTreeMap<String, NodeIterationStats> = BTreeMap::new();
            let mut order: Vec<String> = Vec::new();

            let graph = state.graph.as_ref().unwrap().clone();

            // depth-first sweep: a node's specifications are generated only
            // after every callee was generated this iteration. Nodes in the
            // active ancestor chain are skipped when re-encountered, which
            // is what terminates recursion cycles.
            enum Task {
                Visit(String),
                Generate(String),
            }
            let mut tasks: Vec<Task> = vec![Task::Visit(graph.root().to_string())];
            let mut chain: BTreeSet<String> = BTreeSet::new();
            let mut done: BTreeSet<String> = BTreeSet::new();

            while let Some(task) = tasks.pop() {
                match task {
                    Task::Visit(node) => {
                        if done.contains(&node) || chain.contains(&node) {
                            continue;
                        }
                        chain.insert(node.clone());
                        tasks.push(Task::Generate(node.clone()));
                        // first callee's subtree is processed first
                        for callee in graph.callees(&node)?.into_iter().rev() {
                            tasks.push(Task::Visit(callee.to_string()));
                        }
                    }
                    Task::Generate(node) => {
                        let mut available = done.clone();
                        available.extend(chain.iter().cloned());
                        let prog_ref = state.prog.as_ref().unwrap();
                        let prompt = build_prompt(
                            prog_ref,
                            &graph,
                            &node,
                            &self.cfg.llm,
                            self.shots,
                            &available,
                        )?;
                        let key = QueryKey {
                            checksum: state.unit.checksum.clone(),
                            node: node.clone(),
                            iteration,
                        };
                        let query_started = Instant::now();
                        let raw = self.provider.complete(&key, &prompt, &self.cfg.llm)?;
                        let latency = query_started.elapsed();
                        state.queries += 1;
                        let kind = graph.node(&node).expect("node exists").kind;
                        let cands = parse_candidates(
                            &node,
                            kind,
                            &raw,
                            iteration,
                            self.provider.id(),
                            latency,
                        );
                        state.generated += cands.clauses.len() as u32;
                        state.clock.charge(Phase::Query);

                        self.validate_and_insert(
                            state,
                            &graph,
                            &node,
                            cands,
                            &mut eliminated,
                            &mut stats,
                        )?;
                        state.clock.charge(Phase::Validate);

                        chain.remove(&node);
                        done.insert(node.clone());
                        order.push(node);
                    }
                }
            }

            debug_assert!(
                state
                    .prog
                    .as_ref()
                    .unwrap()
                    .clauses_with_status(SpecStatus::Legal)
                    .is_empty(),
                "deferred clauses must all be drained by the end of the sweep"
            );

            // adequacy: is the generated set sufficient for the assertion?
            let req = self.request(
                state.prog.as_ref().unwrap(),
                CheckMode::Adequacy,
                Some(locator.clone()),
                None,
            );
            let verdict = self.backend.check(&req)?;
            let proved = verdict.overall == Outcome::Proved;
            state.clock.charge(Phase::Validate);

            let mut per_node: Vec<NodeIterationStats> = Vec::new();
            for node in &order {
                let mut entry = stats.remove(node).unwrap_or_default();
                entry.node = node.clone();
                entry.retained = entry
                    .candidates
                    .saturating_sub(entry.eliminated_illegal + entry.eliminated_unsat);
                per_node.push(entry);
            }
            for (node, mut entry) in stats {
                entry.node = node;
                entry.retained = entry
                    .candidates
                    .saturating_sub(entry.eliminated_illegal + entry.eliminated_unsat);
                per_node.push(entry);
            }
            state.traces.push(IterationTrace {
                iteration,
                per_node,
                generation_order: order,
                adequacy_proved: proved,
                query_time: state.clock.query - q0,
                validate_time: state.clock.validate - v0,
                simplify_time: Duration::ZERO,
            });

            if proved {
                state.success = true;
                break;
            }
        }

        if state.success && self.cfg.simplify {
            let s0 = state.clock.simplify;
            let mut prog = state.prog.take().unwrap();
            let result = self.simplify(&mut prog, locator);
            state.prog = Some(prog);
            let stats = result?;
            state.simplify_stats = Some(stats);
            state.clock.charge(Phase::Simplify);
            if let Some(trace) = state.traces.last_mut() {
                trace.simplify_time = state.clock.simplify - s0;
            }
        }

        if state.success {
            let prog = state.prog.as_mut().unwrap();
            for (owner, index) in prog.clauses_with_status(SpecStatus::Satisfiable) {
                prog.set_status(&owner, index, SpecStatus::Retained)?;
            }
        }
        Ok(())
    }

    fn request(
        &self,
        prog: &AnnotatedProgram,
        mode: CheckMode,
        target: Option<AssertionLocator>,
        scope: Option<String>,
    ) -> VerificationRequest {
        let (text, map) = prog.render_mapped();
        let assertion_line = target.as_ref().map(|loc| map.rendered_line(loc.line));
        VerificationRequest {
            program_text: text,
            mode,
            target_assertion: target,
            assertion_line,
            timeout: self.cfg.verifier_timeout,
            annotations: map.clauses,
            scope,
        }
    }

    /// Validation for one node: legality gate with per-clause elimination,
    /// then satisfiability (immediate for functions and outermost loops,
    /// deferred otherwise). Retained clauses are appended to the node's
    /// placeholder behind clauses kept from earlier iterations.
    fn validate_and_insert(
        &self,
        state: &mut RunState,
        graph: &ExtGraph,
        node: &str,
        cands: CandidateSet,
        eliminated: &mut BTreeMap<String, BTreeSet<String>>,
        stats: &mut BTreeMap<String, NodeIterationStats>,
    ) -> Result<(), PipelineError> {
        let prog = state.prog.as_mut().unwrap();
        let entry = stats.entry(node.to_string()).or_default();

        let mut incoming = Vec::new();
        for clause in cands.clauses {
            let norm = clause.normalized();
            let already_present = prog
                .block(node)
                .is_some_and(|b| b.contains_normalized(&norm));
            let was_eliminated = eliminated
                .get(node)
                .is_some_and(|set| set.contains(&norm));
            if already_present || was_eliminated {
                entry.dropped += 1;
            } else {
                incoming.push(clause);
            }
        }
        entry.candidates = incoming.len() as u32;

        for clause in incoming {
            prog.push_clause(node, clause)?;
        }

        let has_candidates = !prog
            .clauses_with_status(SpecStatus::Candidate)
            .is_empty();

        // legality gate
        if has_candidates {
            loop {
                let req = self.request(
                    state.prog.as_ref().unwrap(),
                    CheckMode::Legality,
                    None,
                    Some(node.to_string()),
                );
                let verdict = self.backend.check(&req)?;
                match verdict.overall {
                    Outcome::Proved => break,
                    Outcome::CompileError => {
                        let blamed = verdict.first_unproved_clause().cloned().filter(|cr| {
                            matches!(
                                state.prog.as_ref().unwrap().clause(&cr.owner, cr.index),
                                Some(c) if c.status == SpecStatus::Candidate
                            )
                        });
                        let prog = state.prog.as_mut().unwrap();
                        match blamed {
                            Some(cr) => {
                                let removed = prog.remove_clause(&cr.owner, cr.index)?;
                                eliminated
                                    .entry(cr.owner.clone())
                                    .or_default()
                                    .insert(removed.normalized());
                                stats
                                    .entry(cr.owner.clone())
                                    .or_default()
                                    .eliminated_illegal += 1;
                                if prog.clauses_with_status(SpecStatus::Candidate).is_empty() {
                                    break;
                                }
                            }
                            None => {
                                // cannot attribute the error: legality of the
                                // whole batch is uncertain, reject it
                                Self::eliminate_all(
                                    prog,
                                    SpecStatus::Candidate,
                                    eliminated,
                                    stats,
                                    true,
                                )?;
                                break;
                            }
                        }
                    }
                    Outcome::Failed | Outcome::Timeout => {
                        let prog = state.prog.as_mut().unwrap();
                        Self::eliminate_all(prog, SpecStatus::Candidate, eliminated, stats, true)?;
                        break;
                    }
                }
            }
            let prog = state.prog.as_mut().unwrap();
            for (owner, index) in prog.clauses_with_status(SpecStatus::Candidate) {
                prog.set_status(&owner, index, SpecStatus::Legal)?;
            }
        }

        // satisfiability gate: defer non-outermost loops to their outermost
        // ancestor, where all inner-loop clauses are checked at once
        let kind = graph.node(node).expect("node exists").kind;
        let is_outermost_loop = graph.is_outermost_loop(node);
        let run_sat = match kind {
            NodeKind::Function => true,
            NodeKind::Loop => is_outermost_loop,
        };
        let prog = state.prog.as_mut().unwrap();
        if run_sat && !prog.clauses_with_status(SpecStatus::Legal).is_empty() {
            loop {
                let req = self.request(
                    state.prog.as_ref().unwrap(),
                    CheckMode::Satisfiability,
                    None,
                    Some(node.to_string()),
                );
                let verdict = self.backend.check(&req)?;
                match verdict.overall {
                    Outcome::Proved => {
                        let prog = state.prog.as_mut().unwrap();
                        for (owner, index) in prog.clauses_with_status(SpecStatus::Legal) {
                            prog.set_status(&owner, index, SpecStatus::Satisfiable)?;
                        }
                        break;
                    }
                    Outcome::Failed | Outcome::Timeout | Outcome::CompileError => {
                        let blamed = verdict.first_unproved_clause().cloned().filter(|cr| {
                            matches!(
                                state.prog.as_ref().unwrap().clause(&cr.owner, cr.index),
                                Some(c) if matches!(
                                    c.status,
                                    SpecStatus::Legal | SpecStatus::Satisfiable
                                )
                            )
                        });
                        let prog = state.prog.as_mut().unwrap();
                        match blamed {
                            Some(cr) => {
                                let removed = prog.remove_clause(&cr.owner, cr.index)?;
                                eliminated
                                    .entry(cr.owner.clone())
                                    .or_default()
                                    .insert(removed.normalized());
                                stats.entry(cr.owner.clone()).or_default().eliminated_unsat += 1;
                                if prog.clauses_with_status(SpecStatus::Legal).is_empty() {
                                    break;
                                }
                            }
                            None => {
                                // no removable clause to blame: drop the
                                // unverified remainder and move on
                                Self::eliminate_all(
                                    prog,
                                    SpecStatus::Legal,
                                    eliminated,
                                    stats,
                                    false,
                                )?;
                                break;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn eliminate_all(
        prog: &mut AnnotatedProgram,
        status: SpecStatus,
        eliminated: &mut BTreeMap<String, BTreeSet<String>>,
        stats: &mut BTreeMap<String, NodeIterationStats>,
        illegal: bool,
    ) -> Result<(), PipelineError> {
        for (owner, index) in prog.clauses_with_status(status).into_iter().rev() {
            let removed = prog.remove_clause(&owner, index)?;
            eliminated
                .entry(owner.clone())
                .or_default()
                .insert(removed.normalized());
            let entry = stats.entry(owner).or_default();
            if illegal {
                entry.eliminated_illegal += 1;
            } else {
                entry.eliminated_unsat += 1;
            }
        }
        Ok(())
    }

    /// Greedy minimization: scan clauses newest-first, tentatively remove
    /// each and keep the removal when the assertion still proves; repeat
    /// until a full pass removes nothing. The result is minimal: removing
    /// any single remaining clause breaks adequacy.
    fn simplify(
        &self,
        prog: &mut AnnotatedProgram,
        locator: &AssertionLocator,
    ) -> Result<SimplifyStats, PipelineError> {
        let mut stats = SimplifyStats::default();
        loop {
            let mut removed_this_pass = 0u32;
            let mut checks = 0u32;
            let mut seqs: Vec<u64> = prog.all_clauses().iter().map(|(_, _, c)| c.seq).collect();
            seqs.sort_unstable_by(|a, b| b.cmp(a));
            for seq in seqs {
                let Some((owner, index)) = prog.find_clause_by_seq(seq) else {
                    continue;
                };
                let trial = prog.without_clause(&owner, index)?;
                let req = self.request(&trial, CheckMode::Adequacy, Some(locator.clone()), None);
                checks += 1;
                let verdict = self.backend.check(&req)?;
                if verdict.overall == Outcome::Proved {
                    *prog = trial;
                    removed_this_pass += 1;
                    stats.removed += 1;
                }
            }
            stats.passes += 1;
            stats.checks_per_pass.push(checks);
            if removed_this_pass == 0 {
                break;
            }
        }

        let req = self.request(prog, CheckMode::Adequacy, Some(locator.clone()), None);
        let verdict = self.backend.check(&req)?;
        if verdict.overall != Outcome::Proved {
            return Err(PipelineError::InvariantViolation(
                "simplification left an inadequate specification set".into(),
            ));
        }
        Ok(stats)
    }
}
