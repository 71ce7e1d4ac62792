//! Generic problem data for multistage programs with decision-dependent
//! distributions, the big-M node formulation and brute-force oracles.
//!
//! Each node `n` owns a [`NodeBlock`] with its decisions `x_n`, one binary
//! `delta_nd` per candidate distribution and the linking rows
//!
//! ```text
//! A_n x_n + B_n delta_n + C_a x_a + D_a delta_a = h_n
//! ```
//!
//! where `a` is the parent. `C_a` and `D_a` are stored on the parent block
//! (`c_to_children`, `d_to_children`) because they are shared by every child.

mod formulation;
mod oracle;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{from_json, Error, Result};
use crate::milp::SolveStatus;
use crate::tree::{DistId, Mdst, NodeId, TreeJson};

pub use formulation::{build_node_formulation, count_model, Convention, NodeFormulation};
pub(crate) use formulation::{add_local_block, add_node_value, LocalBlock};
pub use oracle::{enumerate_oracle, evaluate_solution, Evaluation, ORACLE_CAP};

/// Tolerance for feasibility checks on recomputed solutions.
pub const EVAL_TOL: f64 = 1e-6;

/// Domain of one decision variable. Infinite bounds serialize as `null`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "DomainJson", into = "DomainJson")]
pub struct VarDomain {
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainJson {
    lower: Option<f64>,
    upper: Option<f64>,
    #[serde(default)]
    integer: bool,
}

impl From<DomainJson> for VarDomain {
    fn from(d: DomainJson) -> Self {
        VarDomain {
            lower: d.lower.unwrap_or(f64::NEG_INFINITY),
            upper: d.upper.unwrap_or(f64::INFINITY),
            integer: d.integer,
        }
    }
}

impl From<VarDomain> for DomainJson {
    fn from(d: VarDomain) -> Self {
        DomainJson {
            lower: d.lower.is_finite().then_some(d.lower),
            upper: d.upper.is_finite().then_some(d.upper),
            integer: d.integer,
        }
    }
}

impl VarDomain {
    pub fn continuous(lower: f64, upper: f64) -> VarDomain {
        VarDomain { lower, upper, integer: false }
    }

    pub fn binary() -> VarDomain {
        VarDomain { lower: 0.0, upper: 1.0, integer: true }
    }

    pub fn is_binary(&self) -> bool {
        self.integer && self.lower >= 0.0 && self.upper <= 1.0
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lower - tol && v <= self.upper + tol && (!self.integer || (v - v.round()).abs() <= tol)
    }
}

/// Row-major dense matrix.
pub type Matrix = Vec<Vec<f64>>;

/// Coefficients of one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeBlock {
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B")]
    pub b: Matrix,
    /// Applied to this node's `x` in every child's rows.
    #[serde(rename = "C")]
    pub c_to_children: Matrix,
    /// Applied to this node's `delta` in every child's rows.
    #[serde(rename = "D")]
    pub d_to_children: Matrix,
    pub h: Vec<f64>,
    /// Terminal value, leaves only.
    #[serde(rename = "theta")]
    pub theta_terminal: Option<f64>,
    pub domains: Vec<VarDomain>,
}

impl NodeBlock {
    pub fn num_x(&self) -> usize {
        self.r.len()
    }

    pub fn num_rows(&self) -> usize {
        self.h.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MspeuProblem {
    pub tree: Mdst,
    pub blocks: Vec<NodeBlock>,
    /// True iff every `C` matrix is zero.
    pub c_is_zero: bool,
}

fn check_matrix(node: usize, what: &str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows {
        return Err(Error::Dimension { node, detail: format!("{what} has {} rows, expected {rows}", m.len()) });
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Dimension {
                node,
                detail: format!("{what} row {i} has {} entries, expected {cols}", row.len()),
            });
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Dimension { node, detail: format!("{what} row {i} holds {v}") });
        }
    }
    Ok(())
}

fn check_vec(node: usize, what: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::Dimension { node, detail: format!("{what} has length {}, expected {len}", v.len()) });
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Dimension { node, detail: format!("{what} holds {x}") });
    }
    Ok(())
}

impl MspeuProblem {
    /// Checks dimensions along every edge and derives `c_is_zero`.
    pub fn new(tree: Mdst, blocks: Vec<NodeBlock>) -> Result<MspeuProblem> {
        if blocks.len() != tree.num_nodes() {
            return Err(Error::invalid(format!(
                "{} blocks for a tree with {} nodes",
                blocks.len(),
                tree.num_nodes()
            )));
        }
        for n in tree.nodes() {
            let b = &blocks[n.idx()];
            let node = n.idx();
            let nx = b.num_x();
            let nd = tree.num_distributions(n);
            let m = b.num_rows();
            check_vec(node, "r", &b.r, nx)?;
            check_vec(node, "q", &b.q, nd)?;
            check_vec(node, "h", &b.h, m)?;
            check_matrix(node, "A", &b.a, m, nx)?;
            check_matrix(node, "B", &b.b, m, nd)?;
            if b.domains.len() != nx {
                return Err(Error::Dimension {
                    node,
                    detail: format!("{} domains for {nx} variables", b.domains.len()),
                });
            }
            for (j, d) in b.domains.iter().enumerate() {
                if d.lower.is_nan() || d.upper.is_nan() || d.lower > d.upper {
                    return Err(Error::Dimension { node, detail: format!("domain of x_{j} is empty") });
                }
            }
            match (tree.is_leaf(n), b.theta_terminal) {
                (true, None) => {
                    return Err(Error::Dimension { node, detail: "leaf without terminal value".into() })
                }
                (false, Some(_)) => {
                    return Err(Error::Dimension { node, detail: "terminal value on a non-leaf".into() })
                }
                (_, Some(v)) if !v.is_finite() => {
                    return Err(Error::Dimension { node, detail: format!("terminal value {v}") })
                }
                _ => {}
            }
            let child_rows = tree.all_children(n).next().map(|c| blocks[c.idx()].num_rows()).unwrap_or(0);
            for c in tree.all_children(n) {
                if blocks[c.idx()].num_rows() != child_rows {
                    return Err(Error::Dimension {
                        node: c.idx(),
                        detail: format!("siblings have different row counts ({child_rows} at the first child)"),
                    });
                }
            }
            check_matrix(node, "C", &b.c_to_children, child_rows, nx)?;
            check_matrix(node, "D", &b.d_to_children, child_rows, nd)?;
        }
        let c_is_zero = blocks.iter().all(|b| b.c_to_children.iter().flatten().all(|&v| v == 0.0));
        Ok(MspeuProblem { tree, blocks, c_is_zero })
    }

    pub fn block(&self, n: NodeId) -> &NodeBlock {
        &self.blocks[n.idx()]
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ProblemJson {
            format: PROBLEM_FORMAT.to_string(),
            tree: TreeJson::from_tree(&self.tree),
            blocks: self
                .blocks
                .iter()
                .enumerate()
                .map(|(node, block)| BlockJson::new(node, block))
                .collect(),
            c_is_zero: self.c_is_zero,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<MspeuProblem> {
        let doc: ProblemJson = from_json(text)?;
        if doc.format != PROBLEM_FORMAT {
            return Err(Error::schema("/format", format!("expected \"{PROBLEM_FORMAT}\", found \"{}\"", doc.format)));
        }
        let tree = doc.tree.into_tree("/tree")?;
        let mut blocks = Vec::with_capacity(doc.blocks.len());
        for (k, b) in doc.blocks.into_iter().enumerate() {
            if b.node != k {
                return Err(Error::schema(format!("/blocks/{k}/node"), format!("expected node {k}, found {}", b.node)));
            }
            blocks.push(b.into_block());
        }
        let problem = MspeuProblem::new(tree, blocks)?;
        if problem.c_is_zero != doc.c_is_zero {
            return Err(Error::schema(
                "/c_is_zero",
                format!("flag is {} but the C matrices say {}", doc.c_is_zero, problem.c_is_zero),
            ));
        }
        Ok(problem)
    }
}

pub const PROBLEM_FORMAT: &str = "mspeu-problem/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemJson {
    format: String,
    tree: TreeJson,
    blocks: Vec<BlockJson>,
    c_is_zero: bool,
}

/// A block tagged with its node id; spelled out because `flatten` loses
/// error locations.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockJson {
    node: usize,
    r: Vec<f64>,
    q: Vec<f64>,
    #[serde(rename = "A")]
    a: Matrix,
    #[serde(rename = "B")]
    b: Matrix,
    #[serde(rename = "C")]
    c: Matrix,
    #[serde(rename = "D")]
    d: Matrix,
    h: Vec<f64>,
    theta: Option<f64>,
    domains: Vec<VarDomain>,
}

impl BlockJson {
    fn new(node: usize, b: &NodeBlock) -> BlockJson {
        BlockJson {
            node,
            r: b.r.clone(),
            q: b.q.clone(),
            a: b.a.clone(),
            b: b.b.clone(),
            c: b.c_to_children.clone(),
            d: b.d_to_children.clone(),
            h: b.h.clone(),
            theta: b.theta_terminal,
            domains: b.domains.clone(),
        }
    }

    fn into_block(self) -> NodeBlock {
        NodeBlock {
            r: self.r,
            q: self.q,
            a: self.a,
            b: self.b,
            c_to_children: self.c,
            d_to_children: self.d,
            h: self.h,
            theta_terminal: self.theta,
            domains: self.domains,
        }
    }
}

/// Big-M constants keyed by (node, distribution).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BigMTable {
    entries: BTreeMap<(usize, usize), f64>,
}

impl BigMTable {
    pub fn new() -> BigMTable {
        BigMTable::default()
    }

    /// Zero for every non-leaf (n, d).
    pub fn zeros(tree: &Mdst) -> BigMTable {
        BigMTable::filled(tree, |_, _| 0.0)
    }

    pub fn filled(tree: &Mdst, mut f: impl FnMut(NodeId, DistId) -> f64) -> BigMTable {
        let mut t = BigMTable::new();
        for n in tree.non_leaves() {
            for d in 0..tree.num_distributions(n) {
                t.set(n, DistId(d), f(n, DistId(d)));
            }
        }
        t
    }

    pub fn set(&mut self, n: NodeId, d: DistId, m: f64) {
        self.entries.insert((n.idx(), d.idx()), m);
    }

    pub fn get(&self, n: NodeId, d: DistId) -> Option<f64> {
        self.entries.get(&(n.idx(), d.idx())).copied()
    }

    pub fn require(&self, n: NodeId, d: DistId) -> Result<f64> {
        self.get(n, d).ok_or(Error::MissingBigM { node: n.idx(), dist: d.idx() })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, DistId, f64)> + '_ {
        self.entries.iter().map(|(&(n, d), &m)| (NodeId(n), DistId(d), m))
    }

    pub fn scaled(&self, factor: f64) -> BigMTable {
        BigMTable { entries: self.entries.iter().map(|(&k, &v)| (k, v * factor)).collect() }
    }

    pub fn map(&self, mut f: impl FnMut(NodeId, DistId, f64) -> f64) -> BigMTable {
        BigMTable {
            entries: self.entries.iter().map(|(&(n, d), &v)| ((n, d), f(NodeId(n), DistId(d), v))).collect(),
        }
    }

    /// Every non-leaf (n, d) present, finite and nonnegative.
    pub fn check_complete(&self, tree: &Mdst) -> Result<()> {
        for n in tree.non_leaves() {
            for d in 0..tree.num_distributions(n) {
                let m = self.require(n, DistId(d))?;
                if !(m.is_finite() && m >= 0.0) {
                    return Err(Error::invalid(format!("big-M for node {n}, distribution {d} is {m}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<BigMTable> {
        from_json(text)
    }
}

impl Serialize for BigMTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.entries.len()))?;
        for (&(n, d), v) in &self.entries {
            map.serialize_entry(&format!("{n}:{d}"), v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for BigMTable {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = BTreeMap::<String, f64>::deserialize(de)?;
        let mut entries = BTreeMap::new();
        for (k, v) in raw {
            let parsed = k.split_once(':').and_then(|(n, d)| Some((n.parse().ok()?, d.parse().ok()?)));
            let Some(key) = parsed else {
                return Err(D::Error::custom(format!("key `{k}` is not `node:dist`")));
            };
            if !(v.is_finite() && v >= 0.0) {
                return Err(D::Error::custom(format!("entry `{k}` is {v}, big-M values must be finite and >= 0")));
            }
            entries.insert(key, v);
        }
        Ok(BigMTable { entries })
    }
}

/// A complete assignment for every node of the tree.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MspeuSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub x: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    /// False for nodes not reached under the chosen distributions.
    pub on_policy: Vec<bool>,
}

impl MspeuSolution {
    pub fn without_point(status: SolveStatus) -> MspeuSolution {
        MspeuSolution {
            status,
            objective: f64::NAN,
            x: Vec::new(),
            delta: Vec::new(),
            theta: Vec::new(),
            on_policy: Vec::new(),
        }
    }

    pub fn has_point(&self) -> bool {
        !self.x.is_empty()
    }

    /// The distribution with `delta > 0.5`, if exactly one exists.
    pub fn chosen(&self, n: NodeId) -> Option<DistId> {
        let mut it = self.delta[n.idx()].iter().enumerate().filter(|(_, &v)| v > 0.5);
        match (it.next(), it.next()) {
            (Some((d, _)), None) => Some(DistId(d)),
            _ => None,
        }
    }

    /// Marks the nodes reached from the root through chosen distributions.
    pub(crate) fn mark_policy(&mut self, tree: &Mdst) {
        let mut on = vec![false; tree.num_nodes()];
        on[0] = true;
        for n in tree.nodes() {
            if !on[n.idx()] || tree.is_leaf(n) {
                continue;
            }
            if let Some(d) = self.chosen(n) {
                for &c in tree.children(n, d) {
                    on[c.idx()] = true;
                }
            }
        }
        self.on_policy = on;
    }
}
