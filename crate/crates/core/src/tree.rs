//! Multi-distribution scenario trees.
//!
//! Every node carries a (possibly empty) set of candidate distributions and
//! each distribution owns its own list of child realizations. Node ids are
//! dense and assigned in breadth-first order by the builders, so all
//! per-node data can live in plain vectors.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used for probability conservation checks.
pub const PROB_TOL: f64 = 1e-9;

/// Default cap on the number of nodes a builder may allocate.
pub const DEFAULT_NODE_CAP: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    #[inline]
    pub fn idx(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Distribution index, local to the node that owns it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistId(pub usize);

impl DistId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0
    }
}

impl fmt::Display for DistId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Raw tree data. Stages are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdstParts {
    pub num_stages: usize,
    pub stage: Vec<usize>,
    pub parent: Vec<Option<NodeId>>,
    /// `children[n][d]` lists the realizations of distribution `d` at node `n`.
    pub children: Vec<Vec<Vec<NodeId>>>,
    pub probability: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mdst {
    parts: MdstParts,
    stage_nodes: Vec<Vec<NodeId>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProbRule {
    Uniform,
    /// Conditional probabilities of the realizations of every distribution.
    Given(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NodeCount { field: &'static str, len: usize, expected: usize },
    RootProbability { value: f64 },
    RootHasParent { parent: NodeId },
    MissingParent { node: NodeId },
    ProbabilityRange { node: NodeId, value: f64 },
    StageRange { node: NodeId, stage: usize },
    ProbabilityConservation { node: NodeId, dist: DistId, sum: f64, expected: f64 },
    StageConsistency { node: NodeId, parent: NodeId, stage: usize, parent_stage: usize },
    ParentMismatch { node: NodeId, listed_under: NodeId, parent: Option<NodeId> },
    ListedTwice { node: NodeId },
    NotListed { node: NodeId },
    ChildOutOfRange { parent: NodeId, child: usize },
    LastStageHasChildren { node: NodeId, dist: DistId },
    EmptyDistribution { node: NodeId, dist: DistId },
    NoDistributions { node: NodeId },
    Unreachable { node: NodeId },
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::NodeCount { .. } => "node count",
            Violation::RootProbability { .. } => "root probability",
            Violation::RootHasParent { .. } => "root parent",
            Violation::MissingParent { .. } => "missing parent",
            Violation::ProbabilityRange { .. } => "probability range",
            Violation::StageRange { .. } => "stage range",
            Violation::ProbabilityConservation { .. } => "probability conservation",
            Violation::StageConsistency { .. } => "stage consistency",
            Violation::ParentMismatch { .. } => "parent mismatch",
            Violation::ListedTwice { .. } => "listed twice",
            Violation::NotListed { .. } => "not listed",
            Violation::ChildOutOfRange { .. } => "child out of range",
            Violation::LastStageHasChildren { .. } => "last stage has children",
            Violation::EmptyDistribution { .. } => "empty distribution",
            Violation::NoDistributions { .. } => "no distributions",
            Violation::Unreachable { .. } => "unreachable",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NodeCount { field, len, expected } => {
                write!(f, "{field} has {len} entries, expected {expected}")
            }
            RootProbability { value } => write!(f, "root probability is {value}, expected 1"),
            RootHasParent { parent } => write!(f, "root has parent {parent}"),
            MissingParent { node } => write!(f, "node {node} has no parent"),
            ProbabilityRange { node, value } => {
                write!(f, "node {node} probability {value} outside (0, 1]")
            }
            StageRange { node, stage } => write!(f, "node {node} has stage {stage} out of range"),
            ProbabilityConservation { node, dist, sum, expected } => write!(
                f,
                "probability conservation at node {node}, distribution {dist}: children sum to {sum}, expected {expected} (off by {:e})",
                (sum - expected).abs()
            ),
            StageConsistency { node, parent, stage, parent_stage } => write!(
                f,
                "stage consistency: node {node} at stage {stage} has parent {parent} at stage {parent_stage}"
            ),
            ParentMismatch { node, listed_under, parent } => write!(
                f,
                "node {node} listed under {listed_under} but its parent is {parent:?}"
            ),
            ListedTwice { node } => write!(f, "node {node} appears in more than one child list"),
            NotListed { node } => write!(f, "node {node} appears in no child list"),
            ChildOutOfRange { parent, child } => {
                write!(f, "node {parent} lists child {child} which does not exist")
            }
            LastStageHasChildren { node, dist } => {
                write!(f, "last-stage node {node} has children under distribution {dist}")
            }
            EmptyDistribution { node, dist } => {
                write!(f, "node {node} distribution {dist} has no realizations")
            }
            NoDistributions { node } => write!(f, "non-leaf node {node} has no distributions"),
            Unreachable { node } => write!(f, "node {node} is not reachable from the root"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SizeReport {
    pub node_form_vars: usize,
    pub node_form_cons: usize,
    pub scenario_count: usize,
    pub scenario_form_vars: usize,
    pub scenario_form_cons: usize,
    pub nac_count_estimate: usize,
}

/// Builds a tree where every non-leaf node has `dists_per_node`
/// distributions with `realizations_per_dist` children each.
pub fn build_uniform_tree(
    num_stages: usize,
    dists_per_node: usize,
    realizations_per_dist: usize,
    prob_rule: &ProbRule,
) -> Result<Mdst> {
    build_uniform_tree_with_cap(
        num_stages,
        dists_per_node,
        realizations_per_dist,
        prob_rule,
        DEFAULT_NODE_CAP,
    )
}

pub fn build_uniform_tree_with_cap(
    num_stages: usize,
    dists_per_node: usize,
    realizations_per_dist: usize,
    prob_rule: &ProbRule,
    node_cap: usize,
) -> Result<Mdst> {
    if num_stages == 0 || dists_per_node == 0 || realizations_per_dist == 0 {
        return Err(Error::invalid(
            "uniform tree needs at least one stage, distribution and realization",
        ));
    }
    let cond: Vec<f64> = match prob_rule {
        ProbRule::Uniform => vec![1.0 / realizations_per_dist as f64; realizations_per_dist],
        ProbRule::Given(p) => {
            if p.len() != realizations_per_dist {
                return Err(Error::invalid(format!(
                    "{} realization probabilities given for {} realizations",
                    p.len(),
                    realizations_per_dist
                )));
            }
            if p.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
                return Err(Error::invalid("realization probabilities must lie in (0, 1]"));
            }
            p.clone()
        }
    };

    let branching = dists_per_node
        .checked_mul(realizations_per_dist)
        .ok_or(Error::Capacity { what: "nodes", limit: node_cap })?;
    let mut total: usize = 0;
    let mut level: usize = 1;
    for t in 0..num_stages {
        if t > 0 {
            level = level
                .checked_mul(branching)
                .ok_or(Error::Capacity { what: "nodes", limit: node_cap })?;
        }
        total = total
            .checked_add(level)
            .ok_or(Error::Capacity { what: "nodes", limit: node_cap })?;
        if total > node_cap {
            return Err(Error::Capacity { what: "nodes", limit: node_cap });
        }
    }

    let mut parts = MdstParts {
        num_stages,
        stage: Vec::with_capacity(total),
        parent: Vec::with_capacity(total),
        children: Vec::with_capacity(total),
        probability: Vec::with_capacity(total),
    };
    parts.stage.push(1);
    parts.parent.push(None);
    parts.probability.push(1.0);
    parts.children.push(Vec::new());

    let mut frontier = vec![NodeId::ROOT];
    for t in 1..num_stages {
        let mut next = Vec::with_capacity(frontier.len() * branching);
        for &n in &frontier {
            let pn = parts.probability[n.idx()];
            let mut lists = Vec::with_capacity(dists_per_node);
            for _ in 0..dists_per_node {
                let mut list = Vec::with_capacity(realizations_per_dist);
                for &c in &cond {
                    let id = NodeId(parts.stage.len());
                    parts.stage.push(t + 1);
                    parts.parent.push(Some(n));
                    parts.probability.push(pn * c);
                    parts.children.push(Vec::new());
                    list.push(id);
                    next.push(id);
                }
                lists.push(list);
            }
            parts.children[n.idx()] = lists;
        }
        frontier = next;
    }

    let tree = Mdst::from_parts_unchecked(parts);
    let report = tree.validate();
    if !report.is_valid() {
        return Err(Error::InvalidTree(report.to_string()));
    }
    Ok(tree)
}

impl Mdst {
    /// Wraps raw parts without checking them; call [`Mdst::validate`]
    /// before relying on the tree invariants.
    pub fn from_parts_unchecked(parts: MdstParts) -> Mdst {
        let mut stage_nodes = vec![Vec::new(); parts.num_stages];
        for (n, &t) in parts.stage.iter().enumerate() {
            if t >= 1 && t <= parts.num_stages {
                stage_nodes[t - 1].push(NodeId(n));
            }
        }
        Mdst { parts, stage_nodes }
    }

    pub fn from_parts(parts: MdstParts) -> Result<Mdst> {
        let tree = Mdst::from_parts_unchecked(parts);
        let report = tree.validate();
        if report.is_valid() {
            Ok(tree)
        } else {
            Err(Error::InvalidTree(report.to_string()))
        }
    }

    pub fn parts(&self) -> &MdstParts {
        &self.parts
    }

    pub fn into_parts(self) -> MdstParts {
        self.parts
    }

    pub fn num_nodes(&self) -> usize {
        self.parts.stage.len()
    }

    pub fn num_stages(&self) -> usize {
        self.parts.num_stages
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.num_nodes()).map(NodeId)
    }

    pub fn stage(&self, n: NodeId) -> usize {
        self.parts.stage[n.idx()]
    }

    pub fn parent(&self, n: NodeId) -> Option<NodeId> {
        self.parts.parent[n.idx()]
    }

    pub fn probability(&self, n: NodeId) -> f64 {
        self.parts.probability[n.idx()]
    }

    pub fn num_distributions(&self, n: NodeId) -> usize {
        self.parts.children[n.idx()].len()
    }

    pub fn children(&self, n: NodeId, d: DistId) -> &[NodeId] {
        &self.parts.children[n.idx()][d.idx()]
    }

    /// Every child of `n` under every distribution, in distribution order.
    pub fn all_children(&self, n: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.parts.children[n.idx()].iter().flatten().copied()
    }

    /// The distribution of the parent under which `n` is realized.
    pub fn origin_distribution(&self, n: NodeId) -> Option<DistId> {
        let p = self.parent(n)?;
        self.parts.children[p.idx()]
            .iter()
            .position(|list| list.contains(&n))
            .map(DistId)
    }

    pub fn is_leaf(&self, n: NodeId) -> bool {
        self.stage(n) == self.num_stages()
    }

    pub fn stage_nodes(&self, t: usize) -> &[NodeId] {
        &self.stage_nodes[t - 1]
    }

    pub fn leaves(&self) -> &[NodeId] {
        self.stage_nodes(self.num_stages())
    }

    pub fn non_leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(move |&n| !self.is_leaf(n))
    }

    /// Root first, `n` last.
    pub fn path_to(&self, n: NodeId) -> Vec<NodeId> {
        let mut path = vec![n];
        let mut cur = n;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// `n` and all of its descendants under every distribution, breadth first.
    pub fn subtree(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = vec![n];
        let mut i = 0;
        while i < out.len() {
            let cur = out[i];
            out.extend(self.all_children(cur));
            i += 1;
        }
        out
    }

    pub fn validate(&self) -> ValidationReport {
        let p = &self.parts;
        let n_nodes = p.stage.len();
        let mut v = Vec::new();
        for (field, len) in [
            ("parent", p.parent.len()),
            ("children", p.children.len()),
            ("probability", p.probability.len()),
        ] {
            if len != n_nodes {
                v.push(Violation::NodeCount { field, len, expected: n_nodes });
            }
        }
        if n_nodes == 0 {
            v.push(Violation::NodeCount { field: "stage", len: 0, expected: 1 });
        }
        if !v.is_empty() {
            return ValidationReport { violations: v };
        }

        if (p.probability[0] - 1.0).abs() > PROB_TOL {
            v.push(Violation::RootProbability { value: p.probability[0] });
        }
        if let Some(par) = p.parent[0] {
            v.push(Violation::RootHasParent { parent: par });
        }
        for n in 0..n_nodes {
            let node = NodeId(n);
            let pr = p.probability[n];
            if !(pr > 0.0 && pr <= 1.0 + PROB_TOL) {
                v.push(Violation::ProbabilityRange { node, value: pr });
            }
            if p.stage[n] < 1 || p.stage[n] > p.num_stages {
                v.push(Violation::StageRange { node, stage: p.stage[n] });
            }
            if n > 0 && p.parent[n].is_none() {
                v.push(Violation::MissingParent { node });
            }
        }

        let mut listed = vec![0usize; n_nodes];
        for n in 0..n_nodes {
            let node = NodeId(n);
            let leaf = p.stage[n] == p.num_stages;
            if !leaf && p.children[n].is_empty() {
                v.push(Violation::NoDistributions { node });
            }
            for (d, list) in p.children[n].iter().enumerate() {
                let dist = DistId(d);
                if leaf {
                    if !list.is_empty() {
                        v.push(Violation::LastStageHasChildren { node, dist });
                    }
                    continue;
                }
                if list.is_empty() {
                    v.push(Violation::EmptyDistribution { node, dist });
                    continue;
                }
                let mut sum = 0.0;
                for &c in list {
                    if c.idx() >= n_nodes {
                        v.push(Violation::ChildOutOfRange { parent: node, child: c.idx() });
                        continue;
                    }
                    listed[c.idx()] += 1;
                    sum += p.probability[c.idx()];
                    if p.parent[c.idx()] != Some(node) {
                        v.push(Violation::ParentMismatch {
                            node: c,
                            listed_under: node,
                            parent: p.parent[c.idx()],
                        });
                    }
                    if p.stage[c.idx()] != p.stage[n] + 1 {
                        v.push(Violation::StageConsistency {
                            node: c,
                            parent: node,
                            stage: p.stage[c.idx()],
                            parent_stage: p.stage[n],
                        });
                    }
                }
                if (sum - p.probability[n]).abs() > PROB_TOL {
                    v.push(Violation::ProbabilityConservation {
                        node,
                        dist,
                        sum,
                        expected: p.probability[n],
                    });
                }
            }
        }
        for (n, &count) in listed.iter().enumerate().skip(1) {
            match count {
                0 => v.push(Violation::NotListed { node: NodeId(n) }),
                1 => {}
                _ => v.push(Violation::ListedTwice { node: NodeId(n) }),
            }
        }

        // reachability from the root through child lists
        let mut seen = vec![false; n_nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &c in p.children[n].iter().flatten() {
                if c.idx() < n_nodes && !seen[c.idx()] {
                    seen[c.idx()] = true;
                    stack.push(c.idx());
                }
            }
        }
        for (n, ok) in seen.iter().enumerate() {
            if !ok && listed[n] > 0 {
                v.push(Violation::Unreachable { node: NodeId(n) });
            }
        }
        ValidationReport { violations: v }
    }

    /// Root-to-leaf paths, one per leaf, ordered by leaf id.
    pub fn scenarios(&self) -> Vec<Vec<NodeId>> {
        self.leaves().iter().map(|&l| self.path_to(l)).collect()
    }

    /// Number of leaves below each node (1 for a leaf).
    pub fn scenario_multiplicity(&self) -> Vec<usize> {
        let mut mult = vec![0usize; self.num_nodes()];
        for t in (1..=self.num_stages()).rev() {
            for &n in self.stage_nodes(t) {
                mult[n.idx()] = if self.is_leaf(n) {
                    1
                } else {
                    self.all_children(n).map(|c| mult[c.idx()]).sum()
                };
            }
        }
        mult
    }

    pub fn size_report(&self, vars_per_node: usize, cons_per_node: usize) -> SizeReport {
        let scenarios = self.leaves().len();
        let stages = self.num_stages();
        // one non-anticipativity chain per information set: a node shared by
        // k scenarios needs k - 1 equalities per variable
        let nac: usize = (1..stages)
            .map(|t| scenarios - self.stage_nodes(t).len())
            .sum();
        SizeReport {
            node_form_vars: vars_per_node * self.num_nodes(),
            node_form_cons: cons_per_node * self.num_nodes(),
            scenario_count: scenarios,
            scenario_form_vars: vars_per_node * scenarios * stages,
            scenario_form_cons: cons_per_node * scenarios * stages,
            nac_count_estimate: vars_per_node * nac,
        }
    }
}


/// One entry of the `nodes` array in the tree JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeJson {
    pub id: usize,
    pub stage: usize,
    pub parent: Option<usize>,
    pub prob: f64,
}

/// Serialized tree: `children` maps node id to distribution id to child ids.
/// Leaves with distributions list them with empty child arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeJson {
    pub nodes: Vec<NodeJson>,
    pub children: BTreeMap<usize, BTreeMap<usize, Vec<usize>>>,
}

impl TreeJson {
    pub fn from_tree(tree: &Mdst) -> TreeJson {
        let p = tree.parts();
        let nodes = (0..tree.num_nodes())
            .map(|n| NodeJson {
                id: n,
                stage: p.stage[n],
                parent: p.parent[n].map(|q| q.idx()),
                prob: p.probability[n],
            })
            .collect();
        let mut children = BTreeMap::new();
        for (n, dists) in p.children.iter().enumerate() {
            if dists.is_empty() {
                continue;
            }
            let per: BTreeMap<usize, Vec<usize>> = dists
                .iter()
                .enumerate()
                .map(|(d, list)| (d, list.iter().map(|c| c.idx()).collect()))
                .collect();
            children.insert(n, per);
        }
        TreeJson { nodes, children }
    }

    /// Builds and validates the tree; `pointer` is the JSON pointer of this
    /// object inside the enclosing document.
    pub fn into_tree(self, pointer: &str) -> Result<Mdst> {
        let n_nodes = self.nodes.len();
        if n_nodes == 0 {
            return Err(Error::schema(format!("{pointer}/nodes"), "a tree needs at least the root"));
        }
        let mut stage = Vec::with_capacity(n_nodes);
        let mut parent = Vec::with_capacity(n_nodes);
        let mut probability = Vec::with_capacity(n_nodes);
        for (k, node) in self.nodes.iter().enumerate() {
            if node.id != k {
                return Err(Error::schema(
                    format!("{pointer}/nodes/{k}/id"),
                    format!("node ids must be dense and ordered, expected {k}, found {}", node.id),
                ));
            }
            if let Some(q) = node.parent {
                if q >= n_nodes {
                    return Err(Error::schema(
                        format!("{pointer}/nodes/{k}/parent"),
                        format!("parent {q} does not exist"),
                    ));
                }
            }
            stage.push(node.stage);
            parent.push(node.parent.map(NodeId));
            probability.push(node.prob);
        }
        let num_stages = stage.iter().copied().max().unwrap_or(1).max(1);
        let mut children = vec![Vec::new(); n_nodes];
        for (&n, per) in &self.children {
            if n >= n_nodes {
                return Err(Error::schema(format!("{pointer}/children/{n}"), "unknown node"));
            }
            for (expected, (&d, list)) in per.iter().enumerate() {
                if d != expected {
                    return Err(Error::schema(
                        format!("{pointer}/children/{n}/{d}"),
                        format!("distribution ids must be dense from 0, expected {expected}"),
                    ));
                }
                children[n].push(list.iter().map(|&c| NodeId(c)).collect());
            }
        }
        Mdst::from_parts(MdstParts { num_stages, stage, parent, children, probability })
    }
}
