//! Prompt construction and candidate extraction.
//!
//! One query is issued per graph node per iteration. The prompt shows the
//! target component with its placeholder replaced by the infill marker and
//! inlines the code of its callees together with their validated
//! specification blocks; functions with no call relationship to the target
//! are omitted to keep the model focused and the token cost down.

pub mod provider;

use crate::acsl::{self, SpecClause, SpecStatus};
use crate::annotate::AnnotatedProgram;
use crate::callgraph::{ExtGraph, NodeKind};
use std::collections::BTreeSet;
use std::time::Duration;
use thiserror::Error;

pub const INFILL_MARKER: &str = ">>> INFILL <<<";

/// Role sentence of every system message.
pub const ROLE_SENTENCE: &str = "As an experienced C/C++ programmer, I employ a behavioral \
interface specification language that utilizes Hoare style pre/post-conditions, as well as \
invariants, to annotate my C/C++ source code";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid llm config: {0}")]
    InvalidConfig(String),
    #[error("callees of {target} have no specification block this iteration: {missing:?}")]
    MissingCalleeSpecs { target: String, missing: Vec<String> },
    #[error(transparent)]
    Annotate(#[from] crate::annotate::AnnotateError),
    #[error(transparent)]
    Graph(#[from] crate::callgraph::GraphError),
}

#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub provider: String,
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub shots: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            provider: "fixture".into(),
            model: "gpt-3.5-turbo-0613".into(),
            max_tokens: 2048,
            temperature: 0.7,
            shots: 3,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidConfig("max_tokens must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// One input/output demonstration included in the prompt.
#[derive(Debug, Clone)]
pub struct FewShotExample {
    pub input_code: String,
    pub expected_specs: String,
}

/// Ordered example pool; `LlmConfig::shots` examples are taken from the
/// front.
#[derive(Debug, Clone)]
pub struct ShotLibrary {
    examples: Vec<FewShotExample>,
}

impl ShotLibrary {
    pub fn new(examples: Vec<FewShotExample>) -> Result<Self, LlmError> {
        for (i, ex) in examples.iter().enumerate() {
            if acsl::parse_clauses(&ex.expected_specs).clauses.is_empty() {
                return Err(LlmError::InvalidConfig(format!(
                    "shot {} expected_specs contains no clause",
                    i + 1
                )));
            }
        }
        Ok(ShotLibrary { examples })
    }

    pub fn examples(&self) -> &[FewShotExample] {
        &self.examples
    }

    pub fn take(&self, shots: usize) -> Vec<FewShotExample> {
        self.examples.iter().take(shots).cloned().collect()
    }
}

impl Default for ShotLibrary {
    fn default() -> Self {
        let examples = vec![
            FewShotExample {
                input_code: "\
>>> INFILL <<<
void swap(int *a, int *b) {
    int tmp = *a;
    *a = *b;
    *b = tmp;
}
"
                .into(),
                expected_specs: "\
/*@ requires \\valid(a) && \\valid(b);
    ensures *a == \\old(*b);
    ensures *b == \\old(*a);
    assigns *a, *b; */"
                    .into(),
            },
            FewShotExample {
                input_code: "\
void reset(char *p, int n) {
    int i = 0;
    >>> INFILL <<<
    while (i < n) {
        p[i] = 0;
        i = i + 1;
    }
}
"
                .into(),
                expected_specs: "\
/*@ loop invariant 0 <= i <= n;
    loop invariant \\forall integer j; 0 <= j < i ==> ((char*)p)[j] == 0;
    loop assigns i, p[0 .. n-1]; */"
                    .into(),
            },
            FewShotExample {
                input_code: "\
>>> INFILL <<<
int abs_value(int x) {
    if (x < 0) {
        return -x;
    }
    return x;
}
"
                .into(),
                expected_specs: "\
/*@ requires x > -2147483647;
    ensures \\result >= 0;
    assigns \\nothing; */"
                    .into(),
            },
            FewShotExample {
                input_code: "\
int sum_first(int n) {
    int s = 0;
    int k = 0;
    >>> INFILL <<<
    while (k < n) {
        s = s + k;
        k = k + 1;
    }
    return s;
}
"
                .into(),
                expected_specs: "\
/*@ loop invariant 0 <= k <= n;
    loop invariant s == k * (k - 1) / 2;
    loop assigns k, s; */"
                    .into(),
            },
        ];
        ShotLibrary { examples }
    }
}

/// A fully assembled query. `masked_code` contains [`INFILL_MARKER`]
/// exactly once.
#[derive(Debug, Clone)]
pub struct Prompt {
    pub system_message: String,
    pub few_shot: Vec<FewShotExample>,
    pub masked_code: String,
    pub output_indicator: String,
}

impl Prompt {
    /// The user-role message sent alongside the system message.
    pub fn user_message(&self) -> String {
        let mut out = String::new();
        for (i, ex) in self.few_shot.iter().enumerate() {
            out.push_str(&format!(
                "Example {n} input:\n{input}\nExample {n} output:\n{output}\n\n",
                n = i + 1,
                input = ex.input_code.trim_end(),
                output = ex.expected_specs.trim_end(),
            ));
        }
        out.push_str(&self.output_indicator);
        out.push_str("\n\nInput:\n");
        out.push_str(self.masked_code.trim_end());
        out.push_str("\nOutput:\n");
        out
    }
}

/// Candidate clauses parsed from one provider response.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub owner: String,
    pub clauses: Vec<SpecClause>,
    pub raw_response: String,
    pub latency: Duration,
    pub diagnostics: Vec<String>,
}

/// Build the query for `target`.
///
/// `available` holds the nodes whose current-iteration generation is done
/// (or that sit below the target on the scheduling stack, for recursive
/// programs); every callee of the target must be in it.
pub fn build_prompt(
    prog: &AnnotatedProgram,
    graph: &ExtGraph,
    target: &str,
    cfg: &LlmConfig,
    shots: &ShotLibrary,
    available: &BTreeSet<String>,
) -> Result<Prompt, LlmError> {
    cfg.validate()?;
    let missing: Vec<String> = graph
        .callees(target)?
        .into_iter()
        .filter(|c| !available.contains(*c))
        .map(str::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(LlmError::MissingCalleeSpecs {
            target: target.to_string(),
            missing,
        });
    }

    // the target's enclosing function plus every function reachable from it
    let mut include: BTreeSet<String> = BTreeSet::new();
    if let Some(f) = graph.enclosing_function(target) {
        include.insert(f.to_string());
    }
    for id in graph.descendants(target) {
        if matches!(graph.node(&id), Some(n) if n.kind == NodeKind::Function) {
            include.insert(id);
        }
    }

    let masked_code = prog.render_masked(&include, target, INFILL_MARKER)?;
    Ok(Prompt {
        system_message: format!(
            "{ROLE_SENTENCE}. Fill in the {INFILL_MARKER} with ACSL specifications for the \
             marked component."
        ),
        few_shot: shots.take(cfg.shots),
        masked_code,
        output_indicator: format!(
            "Reply with one annotation comment of the form /*@ ... */ containing only the \
             specifications for the {INFILL_MARKER} location."
        ),
    })
}

/// Parse a raw provider response into kind-checked, deduplicated candidates.
pub fn parse_candidates(
    owner: &str,
    owner_kind: NodeKind,
    raw: &str,
    iteration: u32,
    provider_id: &str,
    latency: Duration,
) -> CandidateSet {
    let parsed = acsl::parse_clauses(raw);
    let mut diagnostics = parsed.diagnostics;
    let mut clauses: Vec<SpecClause> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for clause in parsed.clauses {
        let compatible = match owner_kind {
            NodeKind::Function => clause.kind.is_function_kind(),
            NodeKind::Loop => clause.kind.is_loop_kind(),
        };
        if !compatible {
            diagnostics.push(format!(
                "dropped {} clause not applicable to {owner} ({owner_kind})",
                clause.kind
            ));
            continue;
        }
        if !seen.insert(clause.normalized()) {
            continue;
        }
        let mut clause = clause.with_origin(iteration, provider_id);
        clause.status = SpecStatus::Candidate;
        clauses.push(clause);
    }
    CandidateSet {
        owner: owner.to_string(),
        clauses,
        raw_response: raw.to_string(),
        latency,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::insert_placeholders;
    use crate::callgraph::build_extended_call_graph;
    use crate::frontend::{parse_program, SourceUnit};

    const BUBBLE: &str = include_str!("../../tests/corpus/programs/bubble_sort.c");

    fn setup() -> (AnnotatedProgram, ExtGraph) {
        let unit = SourceUnit::new("t.c", BUBBLE).unwrap();
        let ast = parse_program(&unit).unwrap();
        let root = ast.function_named("main").unwrap();
        let graph = build_extended_call_graph(&ast, root).unwrap();
        let prog = insert_placeholders(&unit, &ast, &graph);
        (prog, graph)
    }

    fn all_nodes(graph: &ExtGraph) -> BTreeSet<String> {
        graph.nodes().iter().map(|n| n.id.clone()).collect()
    }

    #[test]
    fn inner_loop_prompt_shows_callee_contract_and_elides_main() {
        let (mut prog, graph) = setup();
        prog.push_clause(
            "swap",
            SpecClause::new(acsl::ClauseKind::Requires, "\\valid(a) && \\valid(b)").unwrap(),
        )
        .unwrap();
        let cfg = LlmConfig::default();
        let prompt = build_prompt(
            &prog,
            &graph,
            "bubbleSort.loop2",
            &cfg,
            &ShotLibrary::default(),
            &all_nodes(&graph),
        )
        .unwrap();
        assert_eq!(prompt.masked_code.matches(INFILL_MARKER).count(), 1);
        assert!(prompt.masked_code.contains("requires \\valid(a) && \\valid(b)"));
        assert!(prompt.masked_code.contains("void swap"));
        assert!(prompt.masked_code.contains("void bubbleSort"));
        assert!(!prompt.masked_code.contains("int main"));
        assert!(prompt.system_message.contains(ROLE_SENTENCE));
        assert!(prompt.system_message.contains("Fill in the >>> INFILL <<<"));
    }

    #[test]
    fn context_pruning_includes_only_reachable_functions() {
        // helper2 has no call relationship to swap and must be elided
        let src = "void helper2(int x) { return; }\n\nvoid swap(int *a, int *b) {\n    int t = *a;\n    *a = *b;\n    *b = t;\n}\n\nint main() {\n    int x = 1;\n    int y = 2;\n    helper2(x);\n    swap(&x, &y);\n    //@ assert x == 2;\n    return 0;\n}\n";
        let unit = SourceUnit::new("t.c", src).unwrap();
        let ast = parse_program(&unit).unwrap();
        let root = ast.function_named("main").unwrap();
        let graph = build_extended_call_graph(&ast, root).unwrap();
        let prog = insert_placeholders(&unit, &ast, &graph);
        let prompt = build_prompt(
            &prog,
            &graph,
            "swap",
            &LlmConfig::default(),
            &ShotLibrary::default(),
            &all_nodes(&graph),
        )
        .unwrap();
        assert!(prompt.masked_code.contains("void swap"));
        assert!(!prompt.masked_code.contains("helper2"));
        assert!(!prompt.masked_code.contains("int main"));
    }

    #[test]
    fn zero_shots_means_no_example_section() {
        let (prog, graph) = setup();
        let cfg = LlmConfig {
            shots: 0,
            ..LlmConfig::default()
        };
        let prompt = build_prompt(
            &prog,
            &graph,
            "swap",
            &cfg,
            &ShotLibrary::default(),
            &all_nodes(&graph),
        )
        .unwrap();
        assert!(prompt.few_shot.is_empty());
        assert!(!prompt.user_message().contains("Example 1 input"));
    }

    #[test]
    fn default_shots_carry_array_zeroing_invariant() {
        let (prog, graph) = setup();
        let cfg = LlmConfig::default();
        let prompt = build_prompt(
            &prog,
            &graph,
            "swap",
            &cfg,
            &ShotLibrary::default(),
            &all_nodes(&graph),
        )
        .unwrap();
        assert!(prompt
            .user_message()
            .contains("\\forall integer j; 0 <= j < i ==> ((char*)p)[j] == 0;"));
    }

    #[test]
    fn missing_callee_specs_is_an_error() {
        let (prog, graph) = setup();
        let cfg = LlmConfig::default();
        let available = BTreeSet::new();
        let err = build_prompt(
            &prog,
            &graph,
            "bubbleSort.loop2",
            &cfg,
            &ShotLibrary::default(),
            &available,
        )
        .unwrap_err();
        match err {
            LlmError::MissingCalleeSpecs { target, missing } => {
                assert_eq!(target, "bubbleSort.loop2");
                assert_eq!(missing, ["swap"]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn candidates_deduplicate_and_kind_filter() {
        let raw = "/*@ requires n > 0; requires n > 0; loop invariant 0 <= i; ensures \\result >= 0; */";
        let set = parse_candidates(
            "f",
            NodeKind::Function,
            raw,
            1,
            "fixture",
            Duration::ZERO,
        );
        assert_eq!(set.clauses.len(), 2); // dup collapsed, loop clause dropped
        assert!(set
            .diagnostics
            .iter()
            .any(|d| d.contains("loop invariant")));
        assert_eq!(set.clauses[0].origin.iteration, 1);
    }

    #[test]
    fn loop_owner_drops_function_kinds() {
        let raw = "/*@ requires n > 0; loop invariant 0 <= i <= n; */";
        let set = parse_candidates("f.loop1", NodeKind::Loop, raw, 2, "fixture", Duration::ZERO);
        assert_eq!(set.clauses.len(), 1);
        assert_eq!(set.clauses[0].kind, acsl::ClauseKind::LoopInvariant);
    }

    #[test]
    fn shot_library_rejects_empty_specs() {
        let err = ShotLibrary::new(vec![FewShotExample {
            input_code: "int f();".into(),
            expected_specs: "no clauses here".into(),
        }])
        .unwrap_err();
        assert!(matches!(err, LlmError::InvalidConfig(_)));
    }

    #[test]
    fn config_validation() {
        let hot = LlmConfig {
            temperature: 2.5,
            ..LlmConfig::default()
        };
        assert!(hot.validate().is_err());
        let empty = LlmConfig {
            max_tokens: 0,
            ..LlmConfig::default()
        };
        assert!(empty.validate().is_err());
    }
}
