//! Backward stage-by-stage decomposition for problems whose parent
//! decisions enter child rows only through the distribution choice
//! (`C = 0`).
//!
//! For every non-leaf node `m` and distribution `k` one MILP over the
//! children `N_mk` gives the expectation `Phi_mk`; deeper values enter as
//! data through `theta_n <= Phi_nd + M_nd (1 - delta_nd)`. A last MILP at
//! the root gives the optimum. [`extract_policy`] then walks forward and
//! re-solves the same groups to recover decisions for every node.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{self, MilpModel, MilpSolution, Relation, Sense, SolveParams, SolveStatus, VarId};
use crate::model::{add_local_block, add_node_value, BigMTable, LocalBlock, MspeuProblem, MspeuSolution};
use crate::tree::{DistId, NodeId};

/// Agreement required between the backward pass and forward re-solves.
const RESOLVE_TOL: f64 = 1e-6;

/// Expectations per (node, distribution); `-inf` marks an infeasible group.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhiTable {
    entries: BTreeMap<(usize, usize), f64>,
}

impl PhiTable {
    pub fn get(&self, n: NodeId, d: DistId) -> Option<f64> {
        self.entries.get(&(n.idx(), d.idx())).copied()
    }

    fn set(&mut self, n: NodeId, d: DistId, v: f64) {
        self.entries.insert((n.idx(), d.idx()), v);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, DistId, f64)> + '_ {
        self.entries.iter().map(|(&(n, d), &v)| (NodeId(n), DistId(d), v))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl Serialize for PhiTable {
    /// `"n:d"` keys; infeasible groups as `null`.
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.entries.len()))?;
        for (&(n, d), &v) in &self.entries {
            map.serialize_entry(&format!("{n}:{d}"), &v.is_finite().then_some(v))?;
        }
        map.end()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: usize,
    pub subproblems: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RootDecision {
    pub x: Vec<f64>,
    pub chosen: Option<DistId>,
    pub theta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BackwardResult {
    pub status: SolveStatus,
    pub z: f64,
    pub phi: PhiTable,
    pub root: Option<RootDecision>,
    /// MILP solves issued, root included.
    pub subproblems: usize,
    pub stages: Vec<StageTiming>,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BackwardOptions {
    /// Visit the nodes of each stage in reverse id order. Results must not
    /// depend on it.
    pub reverse_within_stage: bool,
}

/// A group MILP and handles to its variables.
struct Group {
    model: MilpModel,
    nodes: Vec<(NodeId, LocalBlock, Option<VarId>)>,
}

/// Children of `m` under `k`, with the parent's rows evaluated at `rhs`.
fn group_model(
    problem: &MspeuProblem,
    bigm: &BigMTable,
    phi: &PhiTable,
    m: NodeId,
    k: DistId,
    rhs: DistId,
) -> Result<Group> {
    let tree = &problem.tree;
    let mut model = MilpModel::new(Sense::Maximize);
    let mut nodes = Vec::new();
    for &n in tree.children(m, k) {
        let pi = tree.probability(n);
        let vars = add_local_block(&mut model, problem, n, Some(rhs))?;
        add_node_value(&mut model, problem, n, &vars, pi);
        let theta = add_theta(&mut model, problem, bigm, phi, n, &vars, pi)?;
        nodes.push((n, vars, theta));
    }
    Ok(Group { model, nodes })
}

/// Terminal constant for leaves; otherwise a free `theta_n` bounded by the
/// deeper expectations. Infeasible distributions are switched off.
fn add_theta(
    model: &mut MilpModel,
    problem: &MspeuProblem,
    bigm: &BigMTable,
    phi: &PhiTable,
    n: NodeId,
    vars: &LocalBlock,
    w: f64,
) -> Result<Option<VarId>> {
    let tree = &problem.tree;
    if tree.is_leaf(n) {
        model.objective_offset += w * problem.block(n).theta_terminal.expect("validated leaf");
        return Ok(None);
    }
    let theta = model.add_var(format!("theta_{n}"), f64::NEG_INFINITY, f64::INFINITY, crate::milp::VarKind::Continuous)?;
    model.add_objective(theta, w);
    for d in 0..tree.num_distributions(n) {
        let dist = DistId(d);
        let value = phi.get(n, dist).expect("deeper stage solved first");
        if value == f64::NEG_INFINITY {
            let v = model.var_mut(vars.delta[d]);
            v.upper = 0.0;
            continue;
        }
        let big = bigm.require(n, dist)?;
        // theta + M delta <= Phi + M
        let mut terms = vec![(theta, 1.0)];
        if big != 0.0 {
            terms.push((vars.delta[d], big));
        }
        model.add_constraint(format!("value_{n}_{d}"), terms, Relation::Le, value + big)?;
    }
    Ok(Some(theta))
}

fn root_model(problem: &MspeuProblem, bigm: &BigMTable, phi: &PhiTable) -> Result<Group> {
    let root = NodeId::ROOT;
    let mut model = MilpModel::new(Sense::Maximize);
    let vars = add_local_block(&mut model, problem, root, None)?;
    add_node_value(&mut model, problem, root, &vars, 1.0);
    let theta = add_theta(&mut model, problem, bigm, phi, root, &vars, 1.0)?;
    Ok(Group { model, nodes: vec![(root, vars, theta)] })
}

struct Budget {
    start: Instant,
    limit: Option<Duration>,
    hit: bool,
}

impl Budget {
    fn params(&self, base: &SolveParams) -> Option<SolveParams> {
        match self.limit {
            None => Some(base.clone()),
            Some(l) => {
                let left = l.checked_sub(self.start.elapsed())?;
                Some(SolveParams { time_limit: Some(left), ..base.clone() })
            }
        }
    }
}

fn run(model: &MilpModel, params: &SolveParams, budget: &mut Budget) -> Result<Option<MilpSolution>> {
    let Some(p) = budget.params(params) else {
        budget.hit = true;
        return Ok(None);
    };
    let s = milp::solve(model, &p)?;
    if s.status == SolveStatus::Limit {
        budget.hit = true;
    }
    if s.status == SolveStatus::Unbounded {
        return Err(Error::invalid("a backward subproblem is unbounded; give the decisions finite domains"));
    }
    Ok(Some(s))
}

pub fn solve_backward(problem: &MspeuProblem, bigm: &BigMTable, params: &SolveParams) -> Result<BackwardResult> {
    solve_backward_with(problem, bigm, params, BackwardOptions::default())
}

pub fn solve_backward_with(
    problem: &MspeuProblem,
    bigm: &BigMTable,
    params: &SolveParams,
    opts: BackwardOptions,
) -> Result<BackwardResult> {
    if !problem.c_is_zero {
        return Err(Error::Precondition(
            "the backward algorithm needs C = 0 (parent decisions may only reach children through delta)".into(),
        ));
    }
    let start = Instant::now();
    let tree = &problem.tree;
    let mut budget = Budget { start, limit: params.time_limit, hit: false };
    let mut phi = PhiTable::default();
    let mut subproblems = 0usize;
    let mut stages = Vec::new();

    for t in (1..tree.num_stages()).rev() {
        let stage_start = Instant::now();
        let mut count = 0;
        let mut nodes: Vec<NodeId> = tree.stage_nodes(t).to_vec();
        if opts.reverse_within_stage {
            nodes.reverse();
        }
        for m in nodes {
            for k in 0..tree.num_distributions(m) {
                let k = DistId(k);
                let g = group_model(problem, bigm, &phi, m, k, k)?;
                count += 1;
                let value = match run(&g.model, params, &mut budget)? {
                    Some(s) if s.has_solution() => s.objective,
                    _ => f64::NEG_INFINITY,
                };
                phi.set(m, k, value);
            }
        }
        subproblems += count;
        log::info!("stage {t}: {count} subproblems in {:.3}s", stage_start.elapsed().as_secs_f64());
        stages.push(StageTiming { stage: t, subproblems: count, elapsed: stage_start.elapsed() });
    }

    let g = root_model(problem, bigm, &phi)?;
    subproblems += 1;
    let sol = run(&g.model, params, &mut budget)?;
    let (status, z, root) = match sol {
        Some(s) if s.has_solution() => {
            let (_, vars, theta) = &g.nodes[0];
            let delta: Vec<f64> = vars.delta.iter().map(|&v| s.value(v)).collect();
            let chosen = delta.iter().position(|&v| v > 0.5).map(DistId);
            let root = RootDecision {
                x: vars.x.iter().map(|&v| s.value(v)).collect(),
                chosen,
                theta: theta.map_or_else(|| problem.block(NodeId::ROOT).theta_terminal.unwrap_or(0.0), |v| s.value(v)),
            };
            let status = if budget.hit { SolveStatus::Limit } else { SolveStatus::Optimal };
            (status, s.objective, Some(root))
        }
        Some(s) if s.status == SolveStatus::Infeasible && !budget.hit => (SolveStatus::Infeasible, f64::NAN, None),
        _ => (SolveStatus::Limit, f64::NAN, None),
    };
    Ok(BackwardResult { status, z, phi, root, subproblems, stages, wall_time: start.elapsed() })
}

/// Recovers decisions for every node. Nodes off the optimal policy get a
/// feasible completion computed the same way, with their parent's actual
/// choice on the right-hand side.
pub fn extract_policy(
    problem: &MspeuProblem,
    bigm: &BigMTable,
    result: &BackwardResult,
    params: &SolveParams,
) -> Result<MspeuSolution> {
    if result.status != SolveStatus::Optimal {
        return Err(Error::Precondition(format!("backward status is {}, not optimal", result.status)));
    }
    let tree = &problem.tree;
    let nn = tree.num_nodes();
    let mut sol = MspeuSolution {
        status: SolveStatus::Optimal,
        objective: result.z,
        x: vec![Vec::new(); nn],
        delta: vec![Vec::new(); nn],
        theta: vec![f64::NAN; nn],
        on_policy: Vec::new(),
    };
    let fill = |sol: &mut MspeuSolution, s: &MilpSolution, nodes: &[(NodeId, LocalBlock, Option<VarId>)]| {
        for (n, vars, theta) in nodes {
            sol.x[n.idx()] = vars.x.iter().map(|&v| s.value(v)).collect();
            sol.delta[n.idx()] = vars.delta.iter().map(|&v| s.value(v).round()).collect();
            sol.theta[n.idx()] = match theta {
                Some(v) => s.value(*v),
                None => problem.block(*n).theta_terminal.expect("validated leaf"),
            };
        }
    };

    let g = root_model(problem, bigm, &result.phi)?;
    let s = milp::solve(&g.model, params)?;
    if !s.has_solution() || (s.objective - result.z).abs() > RESOLVE_TOL * result.z.abs().max(1.0) {
        return Err(Error::Consistency(format!("root re-solve gave {} against {}", s.objective, result.z)));
    }
    fill(&mut sol, &s, &g.nodes);

    for t in 1..tree.num_stages() {
        for &m in tree.stage_nodes(t) {
            let Some(c) = sol.chosen(m) else {
                return Err(Error::Consistency(format!("node {m} has no chosen distribution")));
            };
            for k in 0..tree.num_distributions(m) {
                let k = DistId(k);
                let g = group_model(problem, bigm, &result.phi, m, k, c)?;
                let s = milp::solve(&g.model, params)?;
                if !s.has_solution() {
                    return Err(Error::Consistency(format!(
                        "children of node {m} under distribution {k} have no feasible completion \
                         when distribution {c} is chosen"
                    )));
                }
                if k == c {
                    let expect = result.phi.get(m, k).unwrap_or(f64::NAN);
                    if (s.objective - expect).abs() > RESOLVE_TOL * expect.abs().max(1.0) {
                        return Err(Error::Consistency(format!(
                            "re-solve of node {m}, distribution {k} gave {} against {expect}",
                            s.objective
                        )));
                    }
                }
                fill(&mut sol, &s, &g.nodes);
            }
        }
    }
    sol.mark_policy(tree);
    Ok(sol)
}
