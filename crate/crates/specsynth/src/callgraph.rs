//! The extended call graph: functions *and* loops as nodes.
//!
//! Construction starts from the function containing the target assertion and
//! transitively visits every reachable node with a FIFO worklist. While
//! visiting a node only the statements directly contained in it are scanned;
//! loops promoted to child nodes hide their bodies from the parent scan, so
//! edges reflect innermost containment (a nested loop hangs off its enclosing
//! loop, a call inside the innermost loop hangs off that loop). Calls to
//! functions with no definition in the unit are recorded as unresolved
//! externals on the calling node instead of becoming graph nodes.

use crate::frontend::{Ast, AstId, AstKind};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("graph root must be a function definition")]
    InvalidRoot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Function,
    Loop,
}

impl std::fmt::Display for NodeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeKind::Function => f.write_str("Function"),
            NodeKind::Loop => f.write_str("Loop"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtNode {
    pub id: String,
    pub kind: NodeKind,
    pub ast: AstId,
    /// Loop nesting depth; 0 for functions, 1 for an outermost loop.
    pub depth: u32,
}

#[derive(Debug, Clone)]
pub struct ExtGraph {
    nodes: Vec<ExtNode>,
    index: BTreeMap<String, usize>,
    edges: Vec<(String, String)>,
    root: String,
    unresolved: BTreeMap<String, Vec<String>>,
}

/// Build the graph reachable from `root_fn`.
///
/// Loop ids are `<function>.loop<k>` with `k` assigned by preorder
/// appearance within the function, so the outer loop of `bubbleSort` is
/// `bubbleSort.loop1` no matter in which order nodes are discovered.
pub fn build_extended_call_graph(ast: &Ast, root_fn: AstId) -> Result<ExtGraph, GraphError> {
    if ast.node(root_fn).kind != AstKind::FunctionDef {
        return Err(GraphError::InvalidRoot);
    }

    let mut defined: BTreeMap<String, AstId> = BTreeMap::new();
    for f in ast.function_defs() {
        let name = ast.node(f).name.clone().expect("function has a name");
        defined.entry(name).or_insert(f);
    }

    let mut loop_names: BTreeMap<AstId, String> = BTreeMap::new();
    for f in ast.function_defs() {
        let fname = ast.node(f).name.clone().unwrap();
        let mut k = 0;
        for id in ast.preorder(f) {
            if ast.node(id).kind == AstKind::LoopStmt {
                k += 1;
                loop_names.insert(id, format!("{fname}.loop{k}"));
            }
        }
    }

    let root_name = ast.node(root_fn).name.clone().unwrap();
    let mut graph = ExtGraph {
        nodes: vec![ExtNode {
            id: root_name.clone(),
            kind: NodeKind::Function,
            ast: root_fn,
            depth: 0,
        }],
        index: BTreeMap::from([(root_name.clone(), 0)]),
        edges: Vec::new(),
        root: root_name.clone(),
        unresolved: BTreeMap::new(),
    };

    let mut worklist: VecDeque<String> = VecDeque::from([root_name]);
    while let Some(current) = worklist.pop_front() {
        let cur = graph.nodes[graph.index[&current]].clone();
        let mut seen_children: BTreeSet<String> = BTreeSet::new();
        let mut seen_unresolved: BTreeSet<String> = BTreeSet::new();
        for item in direct_items(ast, cur.ast) {
            match ast.node(item).kind {
                AstKind::LoopStmt => {
                    let child = loop_names[&item].clone();
                    if !graph.index.contains_key(&child) {
                        graph.index.insert(child.clone(), graph.nodes.len());
                        graph.nodes.push(ExtNode {
                            id: child.clone(),
                            kind: NodeKind::Loop,
                            ast: item,
                            depth: cur.depth + 1,
                        });
                        worklist.push_back(child.clone());
                    }
                    if seen_children.insert(child.clone()) {
                        graph.edges.push((current.clone(), child));
                    }
                }
                AstKind::CallExpr => {
                    let callee = ast.node(item).name.clone().unwrap();
                    match defined.get(&callee) {
                        Some(def) => {
                            if !graph.index.contains_key(&callee) {
                                graph.index.insert(callee.clone(), graph.nodes.len());
                                graph.nodes.push(ExtNode {
                                    id: callee.clone(),
                                    kind: NodeKind::Function,
                                    ast: *def,
                                    depth: 0,
                                });
                                worklist.push_back(callee.clone());
                            }
                            if seen_children.insert(callee.clone()) {
                                graph.edges.push((current.clone(), callee));
                            }
                        }
                        None => {
                            if seen_unresolved.insert(callee.clone()) {
                                graph
                                    .unresolved
                                    .entry(current.clone())
                                    .or_default()
                                    .push(callee);
                            }
                        }
                    }
                }
                _ => {}
            }
        }
    }

    Ok(graph)
}

/// Loops and calls directly contained in `container`, in source order.
/// Descends through transparent structure but not into nested loop bodies.
fn direct_items(ast: &Ast, container: AstId) -> Vec<AstId> {
    let mut out = Vec::new();
    let mut stack: Vec<AstId> = ast.node(container).children.iter().rev().copied().collect();
    while let Some(id) = stack.pop() {
        let node = ast.node(id);
        match node.kind {
            AstKind::LoopStmt => out.push(id),
            AstKind::CallExpr => {
                out.push(id);
                stack.extend(node.children.iter().rev());
            }
            _ => stack.extend(node.children.iter().rev()),
        }
    }
    out
}

impl ExtGraph {
    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn nodes(&self) -> &[ExtNode] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&ExtNode> {
        self.index.get(id).map(|i| &self.nodes[*i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    /// Children of `id` in edge order; stable across runs.
    pub fn callees(&self, id: &str) -> Result<Vec<&str>, GraphError> {
        if !self.index.contains_key(id) {
            return Err(GraphError::UnknownNode(id.to_string()));
        }
        Ok(self
            .edges
            .iter()
            .filter(|(p, _)| p == id)
            .map(|(_, c)| c.as_str())
            .collect())
    }

    /// The discovery parent: first edge pointing at `id`.
    pub fn parent(&self, id: &str) -> Option<&str> {
        self.edges
            .iter()
            .find(|(_, c)| c == id)
            .map(|(p, _)| p.as_str())
    }

    /// A loop node whose parent is a function; satisfiability of deferred
    /// inner-loop clauses is checked here.
    pub fn is_outermost_loop(&self, id: &str) -> bool {
        match self.node(id) {
            Some(n) if n.kind == NodeKind::Loop => match self.parent(id) {
                Some(p) => matches!(self.node(p), Some(pn) if pn.kind == NodeKind::Function),
                None => false,
            },
            _ => false,
        }
    }

    /// The function whose body contains `id` (identity for functions).
    pub fn enclosing_function(&self, id: &str) -> Option<&str> {
        let mut cur = id;
        loop {
            match self.node(cur) {
                Some(n) if n.kind == NodeKind::Function => return Some(&self.nodes[self.index[cur]].id),
                Some(_) => cur = self.parent(cur)?,
                None => return None,
            }
        }
    }

    /// Every node reachable from `id` (excluding `id` itself).
    pub fn descendants(&self, id: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut queue: VecDeque<&str> = VecDeque::from([id]);
        while let Some(cur) = queue.pop_front() {
            for (p, c) in &self.edges {
                if p == cur && !out.contains(c) && c != id {
                    out.insert(c.clone());
                    queue.push_back(c);
                }
            }
        }
        out
    }

    pub fn unresolved_externals(&self, id: &str) -> &[String] {
        self.unresolved.get(id).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn all_unresolved(&self) -> &BTreeMap<String, Vec<String>> {
        &self.unresolved
    }

    /// DOT rendering for debug export, nodes labeled `id:kind`.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph extended_call_graph {\n");
        for n in &self.nodes {
            out.push_str(&format!("  \"{}\" [label=\"{}:{}\"];\n", n.id, n.id, n.kind));
        }
        for (p, c) in &self.edges {
            out.push_str(&format!("  \"{p}\" -> \"{c}\";\n"));
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{locate_assertion, parse_program, AssertionLocator, SourceUnit};

    const BUBBLE: &str = include_str!("../tests/corpus/programs/bubble_sort.c");

    fn graph_for(text: &str, root: &str) -> (Ast, ExtGraph) {
        let unit = SourceUnit::new("t.c", text).unwrap();
        let ast = parse_program(&unit).unwrap();
        let root_fn = ast.function_named(root).unwrap();
        let graph = build_extended_call_graph(&ast, root_fn).unwrap();
        (ast, graph)
    }

    #[test]
    fn bubble_sort_graph_matches_worked_example() {
        let (_, g) = graph_for(BUBBLE, "main");
        let ids: Vec<&str> = g.nodes().iter().map(|n| n.id.as_str()).collect();
        assert_eq!(
            ids,
            ["main", "bubbleSort", "bubbleSort.loop1", "bubbleSort.loop2", "swap"]
        );
        assert_eq!(
            g.edges(),
            &[
                ("main".into(), "bubbleSort".into()),
                ("bubbleSort".into(), "bubbleSort.loop1".into()),
                ("bubbleSort.loop1".into(), "bubbleSort.loop2".into()),
                ("bubbleSort.loop2".into(), "swap".into()),
            ]
        );
        assert_eq!(g.callees("bubbleSort").unwrap(), ["bubbleSort.loop1"]);
        assert!(g.callees("swap").unwrap().is_empty());
        assert!(g.is_outermost_loop("bubbleSort.loop1"));
        assert!(!g.is_outermost_loop("bubbleSort.loop2"));
        assert_eq!(g.enclosing_function("bubbleSort.loop2"), Some("bubbleSort"));
        assert_eq!(g.node("bubbleSort.loop2").unwrap().depth, 2);
    }

    #[test]
    fn single_function_graph() {
        let (_, g) = graph_for("int main() { return 0; }", "main");
        assert_eq!(g.nodes().len(), 1);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn sibling_loops_then_call_in_source_order() {
        let src = "void helper(int x) { return; }\nint main() {\n    int i;\n    for (i = 0; i < 3; i++) { }\n    while (i > 0) { i--; }\n    helper(i);\n    return 0;\n}\n";
        let (_, g) = graph_for(src, "main");
        assert_eq!(
            g.callees("main").unwrap(),
            ["main.loop1", "main.loop2", "helper"]
        );
    }

    #[test]
    fn recursion_produces_back_edges_and_terminates() {
        let src = "int even(int n);\nint odd(int n) { if (n == 0) { return 0; } return even(n - 1); }\nint even(int n) { if (n == 0) { return 1; } return odd(n - 1); }\nint main() { int r = even(4); //@ assert r == 1;\n return r; }\n";
        let unit = SourceUnit::new("t.c", src).unwrap();
        let ast = parse_program(&unit).unwrap();
        let root = locate_assertion(&ast, &AssertionLocator::at_line(4)).unwrap();
        let g = build_extended_call_graph(&ast, root).unwrap();
        let ids: Vec<&str> = g.nodes().iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, ["main", "even", "odd"]);
        assert_eq!(g.callees("odd").unwrap(), ["even"]);
        assert_eq!(g.callees("even").unwrap(), ["odd"]);
    }

    #[test]
    fn undefined_callee_recorded_as_unresolved() {
        let src = "#include <math.h>\nint main() {\n    double x = pow(2, 3);\n    return 0;\n}\n";
        let (_, g) = graph_for(src, "main");
        assert_eq!(g.nodes().len(), 1);
        assert_eq!(g.unresolved_externals("main"), ["pow".to_string()]);
    }

    #[test]
    fn unknown_node_is_an_error() {
        let (_, g) = graph_for("int main() { return 0; }", "main");
        assert!(matches!(
            g.callees("ghost"),
            Err(GraphError::UnknownNode(name)) if name == "ghost"
        ));
    }

    #[test]
    fn call_in_loop_condition_belongs_to_loop() {
        let src = "int more(int i) { return i < 3; }\nint main() {\n    int i = 0;\n    while (more(i)) { i++; }\n    return 0;\n}\n";
        let (_, g) = graph_for(src, "main");
        assert_eq!(g.callees("main").unwrap(), ["main.loop1"]);
        assert_eq!(g.callees("main.loop1").unwrap(), ["more"]);
    }

    #[test]
    fn dot_export_lists_nodes_and_edges() {
        let (_, g) = graph_for(BUBBLE, "main");
        let dot = g.to_dot();
        assert!(dot.contains("\"bubbleSort.loop1\" [label=\"bubbleSort.loop1:Loop\"]"));
        assert!(dot.contains("\"main\" -> \"bubbleSort\""));
    }
}
