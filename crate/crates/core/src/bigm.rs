//! Big-M constants for the value rows of the node formulation.
//!
//! For a node `n` and distribution `d`, `M_nd` must bound `theta_n - phi_nd`
//! whenever `d` is not chosen. The general procedure bounds the largest
//! competing expectation `Theta*` and the smallest `phi_nd` by solving
//! relaxations over the window formed by the ancestors of `n` and its
//! subtree, working from stage `T-1` to the root so that deeper constants
//! can be embedded. Dropping the rest of the tree only removes rows, so
//! every window is itself a relaxation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ftcp::FtcpInstance;
use crate::milp::{self, MilpModel, Relation, Sense, SolveParams, SolveStatus, VarId, VarKind};
use crate::model::{build_node_formulation, enumerate_oracle, BigMTable, MspeuProblem, VarDomain};
use crate::tree::{DistId, NodeId};

/// Largest and smallest value of the child expectation of one distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub max: f64,
    pub min: f64,
}

/// `M(d) = max_{d' != d} max(d') - min(d)`, never below zero.
pub fn pairwise_bigm(bounds: &BTreeMap<DistId, BoundPair>) -> BTreeMap<DistId, f64> {
    bounds
        .iter()
        .map(|(&d, b)| {
            let rival = bounds.iter().filter(|(&k, _)| k != d).map(|(_, p)| p.max).fold(f64::NEG_INFINITY, f64::max);
            let m = if rival == f64::NEG_INFINITY { 0.0 } else { (rival - b.min).max(0.0) };
            (d, m)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    /// LP relaxation of the window problems.
    #[default]
    Lp,
    /// LP relaxation without the linking rows of nodes two or more stages
    /// below the target.
    StagewiseDrop,
    /// The window problems solved as MILPs.
    Exact,
}

#[derive(Clone, Copy, Debug)]
enum Goal {
    /// Largest child expectation with `d` chosen.
    MaxExpectation(DistId),
    /// Largest `theta_n - phi_nd` with `d` not chosen and `theta_n <= cap`.
    /// With `as_chosen` the children under `d` see their linking rows as if
    /// `d` had been picked, which is the context the backward values use.
    MaxDifference { d: DistId, cap: f64, as_chosen: bool },
}

fn var_kind(d: &VarDomain) -> VarKind {
    if d.is_binary() {
        VarKind::Binary
    } else if d.integer {
        VarKind::Integer
    } else {
        VarKind::Continuous
    }
}

/// Builds the window problem at `nbar`. `deeper` must hold the constants of
/// every non-leaf node below `nbar`.
fn window_model(
    problem: &MspeuProblem,
    deeper: &BigMTable,
    nbar: NodeId,
    goal: Goal,
    relaxation: Relaxation,
) -> Result<MilpModel> {
    let tree = &problem.tree;
    let tbar = tree.stage(nbar);
    let mut nodes = tree.path_to(nbar);
    nodes.pop();
    nodes.extend(tree.subtree(nbar));

    let mut model = MilpModel::new(Sense::Maximize);
    let mut x: BTreeMap<NodeId, Vec<VarId>> = BTreeMap::new();
    let mut delta: BTreeMap<NodeId, Vec<VarId>> = BTreeMap::new();
    for &n in &nodes {
        let b = problem.block(n);
        let xs = b
            .domains
            .iter()
            .enumerate()
            .map(|(j, d)| model.add_var(format!("x_{n}_{j}"), d.lower, d.upper, var_kind(d)))
            .collect::<Result<Vec<_>>>()?;
        let ds = (0..tree.num_distributions(n))
            .map(|d| model.add_var(format!("delta_{n}_{d}"), 0.0, 1.0, VarKind::Binary))
            .collect::<Result<Vec<_>>>()?;
        if !ds.is_empty() {
            model.add_constraint(format!("choice_{n}"), ds.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0)?;
        }
        x.insert(n, xs);
        delta.insert(n, ds);
    }

    let held = match goal {
        Goal::MaxDifference { d, as_chosen: true, .. } => Some(d),
        _ => None,
    };
    for &n in &nodes {
        if relaxation == Relaxation::StagewiseDrop && tree.stage(n) > tbar + 1 {
            continue;
        }
        let b = problem.block(n);
        let under_held = held.filter(|&d| tree.parent(n) == Some(nbar) && tree.children(nbar, d).contains(&n));
        for i in 0..b.num_rows() {
            let nz = |(&v, &a): (&VarId, &f64)| (a != 0.0).then_some((v, a));
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            let mut rhs = b.h[i];
            terms.extend(x[&n].iter().zip(&b.a[i]).filter_map(nz));
            terms.extend(delta[&n].iter().zip(&b.b[i]).filter_map(nz));
            if let Some(p) = tree.parent(n) {
                let pb = problem.block(p);
                terms.extend(x[&p].iter().zip(&pb.c_to_children[i]).filter_map(nz));
                match under_held {
                    Some(d) => rhs -= pb.d_to_children[i][d.idx()],
                    None => terms.extend(delta[&p].iter().zip(&pb.d_to_children[i]).filter_map(nz)),
                }
            }
            model.add_constraint(format!("link_{n}_{i}"), terms, Relation::Eq, rhs)?;
        }
    }

    // theta of every non-leaf strictly below nbar; leaves enter as constants
    let mut theta: BTreeMap<NodeId, VarId> = BTreeMap::new();
    for &n in &nodes {
        if tree.stage(n) > tbar && !tree.is_leaf(n) {
            theta.insert(n, model.add_var(format!("theta_{n}"), f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous)?);
        }
    }
    // sum_m pi_m (r x_m + q delta_m + theta_m) as terms plus a constant
    let expectation = |n: NodeId, d: DistId| -> (Vec<(VarId, f64)>, f64) {
        let mut terms = Vec::new();
        let mut constant = 0.0;
        for &m in tree.children(n, d) {
            let pi = tree.probability(m);
            let mb = problem.block(m);
            terms.extend(x[&m].iter().zip(&mb.r).filter(|(_, &r)| r != 0.0).map(|(&v, &r)| (v, pi * r)));
            terms.extend(delta[&m].iter().zip(&mb.q).filter(|(_, &q)| q != 0.0).map(|(&v, &q)| (v, pi * q)));
            match theta.get(&m) {
                Some(&t) => terms.push((t, pi)),
                None => constant += pi * mb.theta_terminal.expect("validated leaf"),
            }
        }
        (terms, constant)
    };

    let lower_bounding = matches!(goal, Goal::MaxDifference { .. });
    for (&n, &t) in &theta {
        for d in 0..tree.num_distributions(n) {
            let dist = DistId(d);
            let m = deeper.require(n, dist)?;
            let (phi, c) = expectation(n, dist);
            // theta - phi - M delta >= c - M   or   theta - phi + M delta <= c + M
            let mut terms = vec![(t, 1.0)];
            terms.extend(phi.into_iter().map(|(v, a)| (v, -a)));
            let sign = if lower_bounding { -1.0 } else { 1.0 };
            if m != 0.0 {
                terms.push((delta[&n][d], sign * m));
            }
            let (rel, rhs) = if lower_bounding { (Relation::Ge, c - m) } else { (Relation::Le, c + m) };
            model.add_constraint(format!("value_{n}_{d}"), terms, rel, rhs)?;
        }
    }

    match goal {
        Goal::MaxExpectation(d) => {
            let v = model.var_mut(delta[&nbar][d.idx()]);
            v.lower = 1.0;
            let (phi, c) = expectation(nbar, d);
            for (v, a) in phi {
                model.add_objective(v, a);
            }
            model.objective_offset = c;
        }
        Goal::MaxDifference { d, cap, .. } => {
            let v = model.var_mut(delta[&nbar][d.idx()]);
            v.upper = 0.0;
            let tn = model.add_var(format!("theta_{nbar}"), f64::NEG_INFINITY, cap, VarKind::Continuous)?;
            model.add_objective(tn, 1.0);
            let (phi, c) = expectation(nbar, d);
            for (v, a) in phi {
                model.add_objective(v, -a);
            }
            model.objective_offset = -c;
        }
    }
    Ok(model)
}

/// Optimal value of a window problem; `None` when infeasible.
fn window_value(model: &MilpModel, relaxation: Relaxation, params: &SolveParams, n: NodeId, d: DistId) -> Result<Option<f64>> {
    let s = match relaxation {
        Relaxation::Exact => milp::solve(model, params)?,
        Relaxation::Lp | Relaxation::StagewiseDrop => milp::lp_relax_solve(model, params)?,
    };
    match s.status {
        SolveStatus::Optimal => Ok(Some(s.objective)),
        SolveStatus::Infeasible => Ok(None),
        SolveStatus::Unbounded => Err(Error::UnboundedRelaxation { node: n.idx(), dist: d.idx() }),
        // an incumbent of a maximization is not an upper bound
        SolveStatus::Limit if s.best_bound.is_finite() => Ok(Some(s.best_bound)),
        SolveStatus::Limit => Err(Error::invalid(format!("big-M window at node {n}, distribution {d} hit a limit"))),
    }
}

/// Constants for every node of stage `t`, given those of deeper stages.
fn stage_bigm(
    problem: &MspeuProblem,
    table: &mut BigMTable,
    t: usize,
    relaxation: Relaxation,
    params: &SolveParams,
) -> Result<()> {
    let tree = &problem.tree;
    for &n in tree.stage_nodes(t) {
        let nd = tree.num_distributions(n);
        if nd == 1 {
            table.set(n, DistId(0), 0.0);
            continue;
        }
        let mut best = Vec::with_capacity(nd);
        for d in 0..nd {
            let d = DistId(d);
            let model = window_model(problem, table, n, Goal::MaxExpectation(d), relaxation)?;
            best.push(window_value(&model, relaxation, params, n, d)?);
        }
        for d in 0..nd {
            let dist = DistId(d);
            let cap = (0..nd).filter(|&k| k != d).filter_map(|k| best[k]).fold(f64::NEG_INFINITY, f64::max);
            if cap == f64::NEG_INFINITY {
                log::warn!("node {n}: no distribution other than {d} is feasible; M_{n}_{d} set to 0");
                table.set(n, dist, 0.0);
                continue;
            }
            // the constant has to cover both the monolithic rows, where the
            // subtree under d sees delta = 0, and the backward values, which
            // are computed as if d were taken
            let mut m = None;
            for as_chosen in [false, true] {
                let goal = Goal::MaxDifference { d: dist, cap, as_chosen };
                let model = window_model(problem, table, n, goal, relaxation)?;
                if let Some(v) = window_value(&model, relaxation, params, n, dist)? {
                    m = Some(m.map_or(v, |w: f64| w.max(v)));
                }
            }
            let m = match m {
                Some(v) => v.max(0.0),
                None => {
                    log::warn!("node {n}: distribution {d} cannot be left unchosen; M_{n}_{d} set to 0");
                    0.0
                }
            };
            table.set(n, dist, m);
        }
    }
    Ok(())
}

/// Constants for stage `T-1` only.
pub fn compute_bigm_t1(problem: &MspeuProblem, relaxation: Relaxation, params: &SolveParams) -> Result<BigMTable> {
    let mut table = BigMTable::new();
    let t = problem.tree.num_stages();
    if t >= 2 {
        stage_bigm(problem, &mut table, t - 1, relaxation, params)?;
    }
    Ok(table)
}

/// Constants for every non-leaf node.
pub fn compute_bigm_general(problem: &MspeuProblem, relaxation: Relaxation, params: &SolveParams) -> Result<BigMTable> {
    let mut table = BigMTable::new();
    for t in (1..problem.tree.num_stages()).rev() {
        stage_bigm(problem, &mut table, t, relaxation, params)?;
    }
    Ok(table)
}

/// `sum_m disc_m pi_m (M_m + max_j V_jm)` over `(disc, pi, M, max V)` terms.
fn fast_expectation_bound(children: impl Iterator<Item = (f64, f64, f64, f64)>) -> f64 {
    children.map(|(disc, pi, m, v)| disc * pi * (m + v)).sum()
}

/// The bound `M_n` of every node, leaves included, in direct-model units.
pub fn ftcp_fast_node_bounds(inst: &FtcpInstance) -> Vec<f64> {
    let tree = &inst.tree;
    if inst.value.iter().flatten().any(|&v| v < 0.0) {
        log::warn!("negative composition values: the fast big-M bound may be invalid");
    }
    let max_value = |n: NodeId| inst.value[n.idx()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut bound = vec![0.0; tree.num_nodes()];
    for t in (1..=tree.num_stages()).rev() {
        for &n in tree.stage_nodes(t) {
            bound[n.idx()] = if tree.is_leaf(n) {
                inst.discount(t + 1) * max_value(n)
            } else {
                (0..tree.num_distributions(n))
                    .map(|i| {
                        fast_expectation_bound(tree.children(n, DistId(i)).iter().map(|&c| {
                            (inst.discount(tree.stage(c)), tree.probability(c), bound[c.idx()], max_value(c))
                        }))
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            };
        }
    }
    bound
}

/// One constant per node from values alone, valid when every child
/// expectation is nonnegative. Keys are (node, composition) in the units of
/// the direct model; entries repeat across compositions.
pub fn ftcp_fast_bigm(inst: &FtcpInstance) -> BigMTable {
    let bound = ftcp_fast_node_bounds(inst);
    BigMTable::filled(&inst.tree, |n, _| bound[n.idx()])
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BigMReport {
    pub oracle: f64,
    pub monolithic: f64,
    /// `(factor, objective)` for each inflated table.
    pub inflated: Vec<(f64, f64)>,
    pub issues: Vec<String>,
}

impl BigMReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}

/// Checks a table against the enumeration oracle and against the same
/// table inflated by `10^k` for `k = 1..=trials`.
pub fn validate_bigm(problem: &MspeuProblem, table: &BigMTable, trials: u32, params: &SolveParams) -> Result<BigMReport> {
    let mut report = BigMReport::default();
    for (n, d, m) in table.iter() {
        if m < 0.0 {
            report.issues.push(format!("M_{n}_{d} = {m} is negative"));
        }
    }
    let monolithic = |t: &BigMTable| -> Result<f64> {
        let f = build_node_formulation(problem, t)?;
        let s = milp::solve(&f.model, params)?;
        Ok(if s.has_solution() { s.objective } else { f64::NAN })
    };
    report.oracle = enumerate_oracle(problem, params)?.objective;
    report.monolithic = monolithic(table)?;
    if !(close(report.oracle, report.monolithic) || report.oracle.is_nan() && report.monolithic.is_nan()) {
        report.issues.push(format!("monolithic objective {} differs from oracle {}", report.monolithic, report.oracle));
    }
    for k in 1..=trials {
        let factor = 10f64.powi(k as i32);
        let z = monolithic(&table.scaled(factor))?;
        report.inflated.push((factor, z));
        if !(close(z, report.monolithic) || z.is_nan() && report.monolithic.is_nan()) {
            report.issues.push(format!("objective moves to {z} when the table is inflated {factor}x"));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::two_branch;

    fn pairs(v: &[(f64, f64)]) -> BTreeMap<DistId, BoundPair> {
        v.iter().enumerate().map(|(d, &(max, min))| (DistId(d), BoundPair { max, min })).collect()
    }

    #[test]
    fn pairwise_example() {
        let m = pairwise_bigm(&pairs(&[(10.0, 5.0), (9.0, 4.0), (8.0, 3.0)]));
        assert_eq!(m.values().copied().collect::<Vec<_>>(), vec![4.0, 6.0, 7.0]);
        let m = pairwise_bigm(&pairs(&[(7.0, 2.0)]));
        assert_eq!(m[&DistId(0)], 0.0);
        let m = pairwise_bigm(&pairs(&[(7.0, 2.0), (7.0, 2.0)]));
        assert_eq!(m.values().copied().collect::<Vec<_>>(), vec![5.0, 5.0]);
    }

    #[test]
    fn constant_leaves_need_no_bigm() {
        // the child row forces x = 1, so both expectations are 1 + 4
        let p = two_branch(0, [4.0, 4.0]);
        let t = compute_bigm_general(&p, Relaxation::Lp, &SolveParams::default()).unwrap();
        assert_eq!(t.get(NodeId(0), DistId(0)), Some(0.0));
        assert_eq!(t.get(NodeId(0), DistId(1)), Some(0.0));
    }

    #[test]
    fn hand_expectations_give_the_gap() {
        let p = two_branch(0, [10.0, 4.0]);
        let t = compute_bigm_t1(&p, Relaxation::Lp, &SolveParams::default()).unwrap();
        assert!((t.get(NodeId(0), DistId(1)).unwrap() - 6.0).abs() < 1e-9);
        assert_eq!(t.get(NodeId(0), DistId(0)), Some(0.0));
        let r = validate_bigm(&p, &t, 2, &SolveParams::default()).unwrap();
        assert!(r.is_ok(), "{:?}", r.issues);
    }

    #[test]
    fn zeroed_binding_entry_is_flagged() {
        let p = two_branch(0, [3.0, 4.5]);
        let r = validate_bigm(&p, &BigMTable::zeros(&p.tree), 1, &SolveParams::default()).unwrap();
        assert!(!r.is_ok());
    }

    #[test]
    fn fast_bound_toy() {
        // two equiprobable children, max values 50 and 70, child bounds 10 and 20
        let m = fast_expectation_bound([(1.0, 0.5, 10.0, 50.0), (1.0, 0.5, 20.0, 70.0)].into_iter());
        assert_eq!(m, 75.0);
    }

    #[test]
    fn all_modes_agree_on_two_branch() {
        let p = two_branch(0, [3.0, 4.5]);
        let params = SolveParams::default();
        let lp = compute_bigm_general(&p, Relaxation::Lp, &params).unwrap();
        for mode in [Relaxation::StagewiseDrop, Relaxation::Exact] {
            assert_eq!(compute_bigm_general(&p, mode, &params).unwrap(), lp);
        }
    }
}
