//! Probabilistic conditional DAGs.
//!
//! A [`ConditionalDag`] mixes subjob nodes, which carry an execution time,
//! with condition nodes, which pick exactly one of their branch targets at
//! release time. Every combination of branch choices yields a concrete
//! [`DagRealization`] with a realization probability, a volume (total
//! execution time) and a length (longest path).
//!
//! Realizations are derived as follows:
//!
//! - a node that is the branch target of a condition exists only when that
//!   condition exists and chose it; all other nodes always exist;
//! - edges incident to nodes that do not exist are dropped;
//! - an existing condition node `D` takes no time and has an implicit edge
//!   to the target `Y` it chose; it is bypassed, so every path
//!   `X -> D -> Y` or `X -> D -> Z` becomes a direct edge `X -> Y` or
//!   `X -> Z` between subjobs.
//!
//! Bypassing keeps every path of the full graph and creates none, so the
//! realized graph is acyclic whenever the full graph is.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::PROBABILITY_TOLERANCE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branch {
    pub probability: f64,
    pub target: NodeId,
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Subjob { exec: f64 },
    Condition { branches: Vec<Branch> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

impl Node {
    pub fn subjob(id: u64, exec: f64) -> Self {
        Node {
            id: NodeId(id),
            kind: NodeKind::Subjob { exec },
        }
    }

    /// Builds a condition node from `(probability, target)` pairs.
    pub fn condition(id: u64, branches: &[(f64, u64)]) -> Self {
        let branches = branches
            .iter()
            .map(|&(probability, target)| Branch {
                probability,
                target: NodeId(target),
            })
            .collect();
        Node {
            id: NodeId(id),
            kind: NodeKind::Condition { branches },
        }
    }

    pub fn is_condition(&self) -> bool {
        matches!(self.kind, NodeKind::Condition { .. })
    }
}

/// Validation rules, in the order violations are reported for one node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    EmptyGraph,
    DuplicateNodeId,
    NegativeExec,
    EmptyCondition,
    BranchProbability,
    BranchSum,
    BranchTargetMissing,
    SelfBranch,
    DuplicateBranchTarget,
    SharedBranchTarget,
    EdgeEndpointMissing,
    SelfLoop,
    DuplicateEdge,
    Cycle,
}

impl Rule {
    pub fn code(self) -> &'static str {
        match self {
            Rule::EmptyGraph => "empty-graph",
            Rule::DuplicateNodeId => "duplicate-node-id",
            Rule::NegativeExec => "negative-exec",
            Rule::EmptyCondition => "empty-condition",
            Rule::BranchProbability => "branch-probability",
            Rule::BranchSum => "branch-sum",
            Rule::BranchTargetMissing => "branch-target-missing",
            Rule::SelfBranch => "self-branch",
            Rule::DuplicateBranchTarget => "duplicate-branch-target",
            Rule::SharedBranchTarget => "shared-branch-target",
            Rule::EdgeEndpointMissing => "edge-endpoint-missing",
            Rule::SelfLoop => "self-loop",
            Rule::DuplicateEdge => "duplicate-edge",
            Rule::Cycle => "cycle",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    /// Node the violation is attributed to; `None` for graph-level problems.
    pub node: Option<NodeId>,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(id) => write!(f, "node {id}: {}: {}", self.rule.code(), self.message),
            None => write!(f, "graph: {}: {}", self.rule.code(), self.message),
        }
    }
}

/// A probabilistic conditional DAG. Construction does not validate; call
/// [`ConditionalDag::validate`] or let [`ConditionalDag::enumerate_realizations`]
/// reject bad input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDag", into = "RawDag")]
pub struct ConditionalDag {
    nodes: Vec<Node>,
    edges: Vec<(NodeId, NodeId)>,
}

/// One concrete DAG instance.
#[derive(Clone, Debug, PartialEq)]
pub struct DagRealization {
    pub probability: f64,
    /// `(condition, chosen branch index)` for every condition that exists in
    /// this realization, in decision order.
    pub choices: Vec<(NodeId, usize)>,
    /// `(subjob, exec_time)` sorted by id.
    pub subjobs: Vec<(NodeId, f64)>,
    /// Sorted, deduplicated precedence edges between subjobs.
    pub edges: Vec<(NodeId, NodeId)>,
    pub volume: f64,
    pub length: f64,
}

impl DagRealization {
    /// Wraps a plain (condition-free) DAG as a realization of probability 1.
    pub fn from_parts(subjobs: Vec<(NodeId, f64)>, edges: Vec<(NodeId, NodeId)>) -> Result<Self> {
        let mut subjobs = subjobs;
        subjobs.sort_by_key(|s| s.0);
        let mut edges = edges;
        edges.sort();
        edges.dedup();
        let length = longest_path(&subjobs, &edges)?;
        let volume = subjobs.iter().map(|s| s.1).sum();
        Ok(DagRealization {
            probability: 1.0,
            choices: Vec::new(),
            subjobs,
            edges,
            volume,
            length,
        })
    }
}

impl ConditionalDag {
    pub fn new(nodes: Vec<Node>, edges: Vec<(u64, u64)>) -> Self {
        let edges = edges
            .into_iter()
            .map(|(a, b)| (NodeId(a), NodeId(b)))
            .collect();
        ConditionalDag { nodes, edges }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Every violated structural invariant, ordered by node id then rule.
    /// Graph-level violations come first.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |node: Option<NodeId>, rule: Rule, message: String| {
            out.push(Violation {
                node,
                rule,
                message,
            });
        };

        if self.nodes.is_empty() {
            push(None, Rule::EmptyGraph, "graph has no nodes".into());
        }

        let mut index: BTreeMap<NodeId, &Node> = BTreeMap::new();
        let mut seen_dup = BTreeSet::new();
        for n in &self.nodes {
            if index.insert(n.id, n).is_some() && seen_dup.insert(n.id) {
                push(
                    Some(n.id),
                    Rule::DuplicateNodeId,
                    "node id used more than once".into(),
                );
            }
        }

        let mut owners: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for n in index.values() {
            match &n.kind {
                NodeKind::Subjob { exec } => {
                    if !(exec.is_finite() && *exec >= 0.0) {
                        push(
                            Some(n.id),
                            Rule::NegativeExec,
                            format!("execution time {exec} is not a finite non-negative number"),
                        );
                    }
                }
                NodeKind::Condition { branches } => {
                    if branches.is_empty() {
                        push(
                            Some(n.id),
                            Rule::EmptyCondition,
                            "condition has no branches".into(),
                        );
                        continue;
                    }
                    for b in branches {
                        let p = b.probability;
                        if !(p.is_finite() && p > 0.0 && p <= 1.0) {
                            push(
                                Some(n.id),
                                Rule::BranchProbability,
                                format!("branch probability {p} outside (0, 1]"),
                            );
                        }
                    }
                    let sum: f64 = branches.iter().map(|b| b.probability).sum();
                    let err = (sum - 1.0).abs();
                    if err.is_nan() || err > PROBABILITY_TOLERANCE {
                        push(
                            Some(n.id),
                            Rule::BranchSum,
                            format!("branch probabilities sum to {sum}, expected 1"),
                        );
                    }
                    let mut targets = BTreeSet::new();
                    for b in branches {
                        if !index.contains_key(&b.target) {
                            push(
                                Some(n.id),
                                Rule::BranchTargetMissing,
                                format!("branch target {} does not exist", b.target),
                            );
                        }
                        if b.target == n.id {
                            push(
                                Some(n.id),
                                Rule::SelfBranch,
                                "condition branches to itself".into(),
                            );
                        }
                        if !targets.insert(b.target) {
                            push(
                                Some(n.id),
                                Rule::DuplicateBranchTarget,
                                format!("branch target {} listed twice", b.target),
                            );
                        }
                    }
                    for t in targets {
                        owners.entry(t).or_default().push(n.id);
                    }
                }
            }
        }
        for (target, conds) in &owners {
            if conds.len() > 1 {
                let list: Vec<String> = conds.iter().map(ToString::to_string).collect();
                push(
                    Some(*target),
                    Rule::SharedBranchTarget,
                    format!("branch target of several conditions: {}", list.join(", ")),
                );
            }
        }

        let mut seen_edges = BTreeSet::new();
        let mut reported_dups = BTreeSet::new();
        for &(a, b) in &self.edges {
            for end in [a, b] {
                if !index.contains_key(&end) {
                    push(
                        Some(a),
                        Rule::EdgeEndpointMissing,
                        format!("edge {a}->{b} references missing node {end}"),
                    );
                }
            }
            if a == b {
                push(Some(a), Rule::SelfLoop, format!("self-loop {a}->{a}"));
            }
            if !seen_edges.insert((a, b)) && reported_dups.insert((a, b)) {
                push(
                    Some(a),
                    Rule::DuplicateEdge,
                    format!("edge {a}->{b} listed more than once"),
                );
            }
        }

        if let Some(id) = self.cycle_witness(&index) {
            push(
                Some(id),
                Rule::Cycle,
                "directed cycle through this node".into(),
            );
        }

        out.sort_by(|x, y| {
            let key = |v: &Violation| v.node.map_or((0, 0), |n| (1, n.0));
            key(x).cmp(&key(y)).then(x.rule.cmp(&y.rule))
        });
        out
    }

    /// Successor lists over all nodes, including implicit condition -> target
    /// branch edges. Self-loops and dangling endpoints are skipped.
    fn full_successors(
        &self,
        index: &BTreeMap<NodeId, &Node>,
    ) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        let mut succ: BTreeMap<NodeId, BTreeSet<NodeId>> =
            index.keys().map(|&k| (k, BTreeSet::new())).collect();
        let mut add = |a: NodeId, b: NodeId| {
            if a != b && index.contains_key(&a) && index.contains_key(&b) {
                succ.get_mut(&a).expect("indexed").insert(b);
            }
        };
        for &(a, b) in &self.edges {
            add(a, b);
        }
        for n in index.values() {
            if let NodeKind::Condition { branches } = &n.kind {
                for b in branches {
                    add(n.id, b.target);
                }
            }
        }
        succ
    }

    /// Topological order over the full graph, smallest id first among ready
    /// nodes, or `Err(node)` with a node on a cycle.
    fn full_topological_order(
        &self,
        index: &BTreeMap<NodeId, &Node>,
    ) -> Result<Vec<NodeId>, NodeId> {
        let succ = self.full_successors(index);
        let mut indeg: BTreeMap<NodeId, usize> = index.keys().map(|&k| (k, 0)).collect();
        for targets in succ.values() {
            for t in targets {
                *indeg.get_mut(t).expect("indexed") += 1;
            }
        }
        let mut ready: BTreeSet<NodeId> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&k, _)| k)
            .collect();
        let mut order = Vec::with_capacity(index.len());
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for t in &succ[&v] {
                let d = indeg.get_mut(t).expect("indexed");
                *d -= 1;
                if *d == 0 {
                    ready.insert(*t);
                }
            }
        }
        if order.len() == index.len() {
            return Ok(order);
        }
        // Peel nodes with no remaining successors; what is left sits on a cycle.
        let mut rest: BTreeSet<NodeId> = indeg
            .iter()
            .filter(|(_, &d)| d > 0)
            .map(|(&k, _)| k)
            .collect();
        loop {
            let sinks: Vec<NodeId> = rest
                .iter()
                .copied()
                .filter(|v| succ[v].iter().all(|t| !rest.contains(t)))
                .collect();
            if sinks.is_empty() {
                break;
            }
            for s in sinks {
                rest.remove(&s);
            }
        }
        Err(rest.first().copied().unwrap_or(NodeId(0)))
    }

    fn cycle_witness(&self, index: &BTreeMap<NodeId, &Node>) -> Option<NodeId> {
        self.full_topological_order(index).err()
    }

    /// Enumerates every realization, in lexicographic order of branch-choice
    /// indices (conditions taken in topological order).
    pub fn enumerate_realizations(&self) -> Result<Vec<DagRealization>> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidDag(violations));
        }
        let index: BTreeMap<NodeId, &Node> = self.nodes.iter().map(|n| (n.id, n)).collect();
        let order = self
            .full_topological_order(&index)
            .map_err(Error::NotADag)?;
        let owner: BTreeMap<NodeId, NodeId> = self
            .nodes
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Condition { branches } => Some((n.id, branches)),
                NodeKind::Subjob { .. } => None,
            })
            .flat_map(|(id, bs)| bs.iter().map(move |b| (b.target, id)))
            .collect();
        let conditions: Vec<&Node> = order
            .iter()
            .map(|id| index[id])
            .filter(|n| n.is_condition())
            .collect();

        let mut ctx = Enumeration {
            dag: self,
            index: &index,
            owner: &owner,
            conditions: &conditions,
            out: Vec::new(),
        };
        let mut chosen = BTreeMap::new();
        let mut trail = Vec::new();
        ctx.recurse(0, 1.0, &mut chosen, &mut trail)?;
        Ok(ctx.out)
    }
}

struct Enumeration<'a> {
    dag: &'a ConditionalDag,
    index: &'a BTreeMap<NodeId, &'a Node>,
    owner: &'a BTreeMap<NodeId, NodeId>,
    conditions: &'a [&'a Node],
    out: Vec<DagRealization>,
}

impl Enumeration<'_> {
    fn included(&self, id: NodeId, chosen: &BTreeMap<NodeId, NodeId>) -> bool {
        match self.owner.get(&id) {
            None => true,
            Some(cond) => chosen.get(cond) == Some(&id),
        }
    }

    fn recurse(
        &mut self,
        pos: usize,
        probability: f64,
        chosen: &mut BTreeMap<NodeId, NodeId>,
        trail: &mut Vec<(NodeId, usize)>,
    ) -> Result<()> {
        let Some(cond) = self.conditions.get(pos).copied() else {
            let r = self.realize(probability, chosen, trail)?;
            self.out.push(r);
            return Ok(());
        };
        // Owners precede their targets in topological order, so inclusion of
        // `cond` is already decided.
        if !self.included(cond.id, chosen) {
            return self.recurse(pos + 1, probability, chosen, trail);
        }
        let NodeKind::Condition { branches } = &cond.kind else {
            unreachable!()
        };
        for (i, b) in branches.iter().enumerate() {
            chosen.insert(cond.id, b.target);
            trail.push((cond.id, i));
            self.recurse(pos + 1, probability * b.probability, chosen, trail)?;
            trail.pop();
        }
        chosen.remove(&cond.id);
        Ok(())
    }

    /// Successors of an included node in the realized full graph: its
    /// explicit edges to included nodes plus, for a condition, the chosen
    /// branch target.
    fn successors(&self, id: NodeId, chosen: &BTreeMap<NodeId, NodeId>) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .dag
            .edges
            .iter()
            .filter(|e| e.0 == id && self.included(e.1, chosen))
            .map(|e| e.1)
            .collect();
        out.extend(chosen.get(&id));
        out
    }

    fn realize(
        &self,
        probability: f64,
        chosen: &BTreeMap<NodeId, NodeId>,
        trail: &[(NodeId, usize)],
    ) -> Result<DagRealization> {
        let mut subjobs = Vec::new();
        for (&id, node) in self.index {
            if let NodeKind::Subjob { exec } = node.kind {
                if self.included(id, chosen) {
                    subjobs.push((id, exec));
                }
            }
        }
        // Conditions take no time: every path through them becomes a direct
        // edge between the subjobs at its ends.
        let mut edges = BTreeSet::new();
        for &(a, _) in &subjobs {
            let mut stack = self.successors(a, chosen);
            let mut seen = BTreeSet::new();
            while let Some(b) = stack.pop() {
                if !seen.insert(b) {
                    continue;
                }
                if self.index[&b].is_condition() {
                    stack.extend(self.successors(b, chosen));
                } else {
                    edges.insert((a, b));
                }
            }
        }
        let edges: Vec<_> = edges.into_iter().collect();
        let volume = subjobs.iter().map(|s| s.1).sum();
        let length = longest_path(&subjobs, &edges)?;
        Ok(DagRealization {
            probability,
            choices: trail.to_vec(),
            subjobs,
            edges,
            volume,
            length,
        })
    }
}

/// Longest path (sum of execution times) through a plain DAG of subjobs.
pub fn longest_path(subjobs: &[(NodeId, f64)], edges: &[(NodeId, NodeId)]) -> Result<f64> {
    let pos: BTreeMap<NodeId, usize> = subjobs.iter().enumerate().map(|(i, s)| (s.0, i)).collect();
    let n = subjobs.len();
    let mut succ = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for &(a, b) in edges {
        let ia = *pos.get(&a).ok_or(Error::UnknownNode(a))?;
        let ib = *pos.get(&b).ok_or(Error::UnknownNode(b))?;
        succ[ia].push(ib);
        indeg[ib] += 1;
    }
    let mut finish: Vec<f64> = subjobs.iter().map(|s| s.1).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    let mut best = 0.0f64;
    while let Some(v) = queue.pop_front() {
        seen += 1;
        best = best.max(finish[v]);
        for &w in &succ[v] {
            finish[w] = finish[w].max(finish[v] + subjobs[w].1);
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    if seen < n {
        let stuck = (0..n)
            .filter(|&i| indeg[i] > 0)
            .map(|i| subjobs[i].0)
            .min()
            .expect("cycle");
        return Err(Error::NotADag(stuck));
    }
    Ok(best)
}

// JSON schema -------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDag {
    nodes: Vec<RawNode>,
    edges: Vec<(NodeId, NodeId)>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Subjob,
    Condition,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: NodeId,
    #[serde(rename = "type")]
    kind: RawKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exec: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    branches: Option<Vec<RawBranch>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBranch {
    p: f64,
    target: NodeId,
}

impl TryFrom<RawDag> for ConditionalDag {
    type Error = String;

    fn try_from(raw: RawDag) -> Result<Self, String> {
        let nodes = raw
            .nodes
            .into_iter()
            .map(|n| match (n.kind, n.exec, n.branches) {
                (RawKind::Subjob, Some(exec), None) => Ok(Node {
                    id: n.id,
                    kind: NodeKind::Subjob { exec },
                }),
                (RawKind::Subjob, _, _) => Err(format!(
                    "subjob {} needs \"exec\" and no \"branches\"",
                    n.id
                )),
                (RawKind::Condition, None, Some(bs)) => Ok(Node {
                    id: n.id,
                    kind: NodeKind::Condition {
                        branches: bs
                            .into_iter()
                            .map(|b| Branch {
                                probability: b.p,
                                target: b.target,
                            })
                            .collect(),
                    },
                }),
                (RawKind::Condition, _, _) => Err(format!(
                    "condition {} needs \"branches\" and no \"exec\"",
                    n.id
                )),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ConditionalDag {
            nodes,
            edges: raw.edges,
        })
    }
}

impl From<ConditionalDag> for RawDag {
    fn from(dag: ConditionalDag) -> Self {
        let nodes = dag
            .nodes
            .into_iter()
            .map(|n| match n.kind {
                NodeKind::Subjob { exec } => RawNode {
                    id: n.id,
                    kind: RawKind::Subjob,
                    exec: Some(exec),
                    branches: None,
                },
                NodeKind::Condition { branches } => RawNode {
                    id: n.id,
                    kind: RawKind::Condition,
                    exec: None,
                    branches: Some(
                        branches
                            .into_iter()
                            .map(|b| RawBranch {
                                p: b.probability,
                                target: b.target,
                            })
                            .collect(),
                    ),
                },
            })
            .collect();
        RawDag {
            nodes,
            edges: dag.edges,
        }
    }
}

/// The seven-subjob, two-condition example graph used throughout the docs
/// and tests. Subjobs are `1..=7`, conditions are `8` and `9`.
pub fn example_graph() -> ConditionalDag {
    ConditionalDag::new(
        vec![
            Node::subjob(1, 3.0),
            Node::subjob(2, 1.0),
            Node::subjob(3, 2.0),
            Node::subjob(4, 1.0),
            Node::subjob(5, 2.0),
            Node::subjob(6, 5.0),
            Node::subjob(7, 3.0),
            Node::condition(8, &[(0.7, 4), (0.3, 3)]),
            Node::condition(9, &[(0.6, 6), (0.4, 5)]),
        ],
        vec![
            (1, 2),
            (1, 8),
            (2, 3),
            (2, 9),
            (3, 9),
            (4, 9),
            (5, 7),
            (6, 7),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u64]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn example_graph_is_valid() {
        assert!(example_graph().validate().is_empty());
    }

    #[test]
    fn single_subjob_is_valid() {
        let dag = ConditionalDag::new(vec![Node::subjob(0, 5.0)], vec![]);
        assert!(dag.validate().is_empty());
        let rs = dag.enumerate_realizations().unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs[0].probability, 1.0);
        assert_eq!(rs[0].volume, 5.0);
        assert_eq!(rs[0].length, 5.0);
    }

    #[test]
    fn bad_branch_sum_is_one_violation() {
        let mut dag = example_graph();
        dag.nodes[7] = Node::condition(8, &[(0.7, 4), (0.7, 3)]);
        let vs = dag.validate();
        assert_eq!(vs.len(), 1, "{vs:?}");
        assert_eq!(vs[0].rule, Rule::BranchSum);
        assert_eq!(vs[0].node, Some(NodeId(8)));
    }

    #[test]
    fn structural_violations_are_reported_in_order() {
        let dag = ConditionalDag::new(
            vec![
                Node::subjob(1, -1.0),
                Node::subjob(2, 1.0),
                Node::subjob(2, 1.0),
                Node::condition(5, &[(0.0, 2), (1.0, 9)]),
                Node::condition(6, &[(1.0, 2)]),
            ],
            vec![(1, 1), (3, 2), (2, 1), (1, 2), (1, 2)],
        );
        let rules: Vec<(Option<u64>, Rule)> = dag
            .validate()
            .iter()
            .map(|v| (v.node.map(|n| n.0), v.rule))
            .collect();
        assert_eq!(
            rules,
            vec![
                (Some(1), Rule::NegativeExec),
                (Some(1), Rule::SelfLoop),
                (Some(1), Rule::DuplicateEdge),
                (Some(1), Rule::Cycle),
                (Some(2), Rule::DuplicateNodeId),
                (Some(2), Rule::SharedBranchTarget),
                (Some(3), Rule::EdgeEndpointMissing),
                (Some(5), Rule::BranchProbability),
                (Some(5), Rule::BranchTargetMissing),
            ]
        );
    }

    #[test]
    fn empty_graph_is_invalid() {
        let vs = ConditionalDag::new(vec![], vec![]).validate();
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].rule, Rule::EmptyGraph);
    }

    #[test]
    fn example_graph_realizations() {
        let rs = example_graph().enumerate_realizations().unwrap();
        let probs: Vec<f64> = rs.iter().map(|r| r.probability).collect();
        let expected = [0.42, 0.28, 0.18, 0.12];
        for (p, e) in probs.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12, "{probs:?}");
        }

        let first = &rs[0];
        assert_eq!(
            first.subjobs.iter().map(|s| s.0).collect::<Vec<_>>(),
            ids(&[1, 2, 4, 6, 7])
        );
        let want: Vec<(NodeId, NodeId)> = [(1, 2), (1, 4), (2, 6), (4, 6), (6, 7)]
            .iter()
            .map(|&(a, b)| (NodeId(a), NodeId(b)))
            .collect();
        assert_eq!(first.edges, want);
        assert_eq!((first.volume, first.length), (13.0, 12.0));

        assert_eq!((rs[1].volume, rs[1].length), (10.0, 9.0));
        assert_eq!((rs[3].volume, rs[3].length), (11.0, 11.0));
    }

    #[test]
    fn third_realization_length_matches_path_enumeration() {
        let rs = example_graph().enumerate_realizations().unwrap();
        let r = &rs[2];
        assert_eq!(
            r.subjobs.iter().map(|s| s.0).collect::<Vec<_>>(),
            ids(&[1, 2, 3, 6, 7])
        );
        assert_eq!(r.volume, 14.0);
        assert_eq!(r.length, brute_force_longest(&r.subjobs, &r.edges));
        assert_eq!(r.length, 14.0);
    }

    /// Enumerates every source-to-sink path explicitly.
    fn brute_force_longest(subjobs: &[(NodeId, f64)], edges: &[(NodeId, NodeId)]) -> f64 {
        let exec: BTreeMap<NodeId, f64> = subjobs.iter().copied().collect();
        let has_pred: BTreeSet<NodeId> = edges.iter().map(|e| e.1).collect();
        fn walk(
            v: NodeId,
            acc: f64,
            exec: &BTreeMap<NodeId, f64>,
            edges: &[(NodeId, NodeId)],
            best: &mut f64,
        ) {
            let acc = acc + exec[&v];
            let mut leaf = true;
            for e in edges.iter().filter(|e| e.0 == v) {
                leaf = false;
                walk(e.1, acc, exec, edges, best);
            }
            if leaf {
                *best = best.max(acc);
            }
        }
        let mut best = 0.0;
        for &(v, _) in subjobs.iter().filter(|s| !has_pred.contains(&s.0)) {
            walk(v, 0.0, &exec, edges, &mut best);
        }
        best
    }

    #[test]
    fn longest_path_examples() {
        assert_eq!(longest_path(&[(NodeId(0), 7.0)], &[]).unwrap(), 7.0);
        let chain = [(NodeId(1), 3.0), (NodeId(2), 1.0), (NodeId(3), 2.0)];
        let edges = [(NodeId(1), NodeId(2)), (NodeId(2), NodeId(3))];
        assert_eq!(longest_path(&chain, &edges).unwrap(), 6.0);
    }

    #[test]
    fn longest_path_rejects_cycles() {
        let nodes = [(NodeId(1), 1.0), (NodeId(2), 1.0)];
        let edges = [(NodeId(1), NodeId(2)), (NodeId(2), NodeId(1))];
        assert!(matches!(
            longest_path(&nodes, &edges),
            Err(Error::NotADag(NodeId(1)))
        ));
    }

    #[test]
    fn enumeration_rejects_invalid_graph() {
        let dag = ConditionalDag::new(vec![Node::condition(1, &[(0.5, 2)])], vec![]);
        assert!(matches!(
            dag.enumerate_realizations(),
            Err(Error::InvalidDag(_))
        ));
    }

    #[test]
    fn nested_conditions_resolve_recursively() {
        // 1 -> C10 {0.5: 2, 0.5: C11 {0.25: 3, 0.75: 4}} -> 5
        let dag = ConditionalDag::new(
            vec![
                Node::subjob(1, 1.0),
                Node::subjob(2, 2.0),
                Node::subjob(3, 3.0),
                Node::subjob(4, 4.0),
                Node::subjob(5, 5.0),
                Node::condition(10, &[(0.5, 2), (0.5, 11)]),
                Node::condition(11, &[(0.25, 3), (0.75, 4)]),
            ],
            vec![(1, 10), (2, 5), (3, 5), (4, 5)],
        );
        let rs = dag.enumerate_realizations().unwrap();
        let summary: Vec<(f64, f64)> = rs.iter().map(|r| (r.probability, r.length)).collect();
        assert_eq!(summary, vec![(0.5, 8.0), (0.125, 9.0), (0.375, 10.0)]);
        assert_eq!(
            rs[2].edges,
            vec![(NodeId(1), NodeId(4)), (NodeId(4), NodeId(5))]
        );
    }

    #[test]
    fn outgoing_condition_edges_pass_through() {
        let dag = ConditionalDag::new(
            vec![
                Node::subjob(1, 1.0),
                Node::subjob(2, 1.0),
                Node::subjob(3, 1.0),
                Node::condition(4, &[(1.0, 2)]),
            ],
            vec![(1, 4), (4, 3)],
        );
        let rs = dag.enumerate_realizations().unwrap();
        assert_eq!(
            rs[0].edges,
            vec![(NodeId(1), NodeId(2)), (NodeId(1), NodeId(3))]
        );
        assert_eq!(rs[0].length, 2.0);
    }

    #[test]
    fn condition_edge_to_an_ancestor_of_its_branch_stays_acyclic() {
        // 1 -> 2 -> 3 with condition 1 choosing 3: merging 1 into 3 would
        // close the cycle 3 -> 2 -> 3
        let dag = ConditionalDag::new(
            vec![
                Node::condition(1, &[(1.0, 3)]),
                Node::subjob(2, 1.0),
                Node::subjob(3, 2.0),
            ],
            vec![(1, 2), (2, 3)],
        );
        let rs = dag.enumerate_realizations().unwrap();
        assert_eq!(rs[0].edges, vec![(NodeId(2), NodeId(3))]);
        assert_eq!(rs[0].length, 3.0);
    }

    #[test]
    fn json_schema_round_trip() {
        let text = r#"{"nodes":[{"id":1,"type":"subjob","exec":3.0},{"id":8,"type":"condition","branches":[{"p":0.7,"target":4},{"p":0.3,"target":3}]}],"edges":[[1,2],[1,8]]}"#;
        let dag = ConditionalDag::from_json(text).unwrap();
        assert_eq!(serde_json::to_string(&dag).unwrap(), text);
    }

    #[test]
    fn json_rejects_unknown_fields() {
        let extra = r#"{"nodes":[{"id":1,"type":"subjob","exec":3.0,"color":"red"}],"edges":[]}"#;
        assert!(ConditionalDag::from_json(extra).is_err());
        let top = r#"{"nodes":[],"edges":[],"name":"x"}"#;
        assert!(ConditionalDag::from_json(top).is_err());
        let missing_exec = r#"{"nodes":[{"id":1,"type":"subjob"}],"edges":[]}"#;
        assert!(ConditionalDag::from_json(missing_exec).is_err());
    }
}
