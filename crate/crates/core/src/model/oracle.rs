use std::collections::HashMap;

use serde::Serialize;

use super::formulation::{add_local_block, add_node_value};
use super::{MspeuProblem, MspeuSolution, EVAL_TOL};
use crate::error::{Error, Result};
use crate::milp::{self, MilpModel, Sense, SolveParams, SolveStatus};
use crate::tree::{DistId, NodeId};

/// Largest number of distribution assignments the oracle will enumerate.
pub const ORACLE_CAP: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub objective: f64,
    pub feasible: bool,
    pub violations: Vec<String>,
}

/// Recomputes the objective through the exact expectation recursion and
/// checks every row of the original (non-linearized) problem.
pub fn evaluate_solution(problem: &MspeuProblem, sol: &MspeuSolution) -> Result<Evaluation> {
    let tree = &problem.tree;
    let nn = tree.num_nodes();
    if sol.x.len() != nn || sol.delta.len() != nn || sol.theta.len() != nn {
        return Err(Error::invalid(format!("solution covers {} nodes, tree has {nn}", sol.x.len())));
    }
    let mut violations = Vec::new();
    for n in tree.nodes() {
        let b = problem.block(n);
        let (x, delta) = (&sol.x[n.idx()], &sol.delta[n.idx()]);
        if x.len() != b.num_x() || delta.len() != tree.num_distributions(n) {
            return Err(Error::Dimension { node: n.idx(), detail: "solution vector lengths".into() });
        }
        for (j, (v, d)) in x.iter().zip(&b.domains).enumerate() {
            if !d.contains(*v, EVAL_TOL) {
                violations.push(format!("domain of x_{n}_{j}: value {v} outside [{}, {}]", d.lower, d.upper));
            }
        }
        for (d, &v) in delta.iter().enumerate() {
            if v.abs() > EVAL_TOL && (v - 1.0).abs() > EVAL_TOL {
                violations.push(format!("delta_{n}_{d} = {v} is not binary"));
            }
        }
        if !delta.is_empty() {
            let s: f64 = delta.iter().sum();
            if (s - 1.0).abs() > EVAL_TOL {
                violations.push(format!("choice row at node {n}: sum of delta is {s}, expected exactly one distribution"));
            }
        }
        let parent = tree.parent(n);
        for i in 0..b.num_rows() {
            let mut act: f64 = b.a[i].iter().zip(x).map(|(a, v)| a * v).sum();
            act += b.b[i].iter().zip(delta).map(|(a, v)| a * v).sum::<f64>();
            if let Some(p) = parent {
                let pb = problem.block(p);
                act += pb.c_to_children[i].iter().zip(&sol.x[p.idx()]).map(|(a, v)| a * v).sum::<f64>();
                act += pb.d_to_children[i].iter().zip(&sol.delta[p.idx()]).map(|(a, v)| a * v).sum::<f64>();
            }
            if (act - b.h[i]).abs() > EVAL_TOL * (1.0 + b.h[i].abs()) {
                violations.push(format!("linking row {i} at node {n}: activity {act}, rhs {}", b.h[i]));
            }
        }
    }

    // value(n) = r x + q delta + sum_d delta_nd sum_m pi_m value(m)
    let mut value = vec![0.0; nn];
    for t in (1..=tree.num_stages()).rev() {
        for &n in tree.stage_nodes(t) {
            let b = problem.block(n);
            let own: f64 = b.r.iter().zip(&sol.x[n.idx()]).map(|(r, v)| r * v).sum::<f64>()
                + b.q.iter().zip(&sol.delta[n.idx()]).map(|(q, v)| q * v).sum::<f64>();
            let future = if tree.is_leaf(n) {
                b.theta_terminal.expect("validated leaf")
            } else {
                (0..tree.num_distributions(n))
                    .map(|d| {
                        let w = sol.delta[n.idx()][d];
                        if w == 0.0 {
                            return 0.0;
                        }
                        w * tree.children(n, DistId(d)).iter().map(|&m| tree.probability(m) * value[m.idx()]).sum::<f64>()
                    })
                    .sum()
            };
            value[n.idx()] = own + future;
        }
    }
    Ok(Evaluation { objective: value[0], feasible: violations.is_empty(), violations })
}

/// Cached optimum of one node given its own and its parent's distribution.
#[derive(Clone, Debug)]
struct Local {
    value: f64,
    x: Vec<f64>,
    delta: Vec<f64>,
}

fn solve_local(
    problem: &MspeuProblem,
    n: NodeId,
    own: Option<DistId>,
    parent: Option<DistId>,
    params: &SolveParams,
) -> Result<Option<Local>> {
    let mut model = MilpModel::new(Sense::Maximize);
    let vars = add_local_block(&mut model, problem, n, parent)?;
    add_node_value(&mut model, problem, n, &vars, 1.0);
    if let Some(d) = own {
        for (k, &v) in vars.delta.iter().enumerate() {
            let fixed = if k == d.idx() { 1.0 } else { 0.0 };
            let var = model.var_mut(v);
            var.lower = fixed;
            var.upper = fixed;
        }
    }
    let s = milp::solve(&model, params)?;
    match s.status {
        SolveStatus::Optimal => Ok(Some(Local {
            value: s.objective,
            x: vars.x.iter().map(|&v| s.value(v)).collect(),
            delta: vars.delta.iter().map(|&v| s.value(v)).collect(),
        })),
        SolveStatus::Infeasible => Ok(None),
        SolveStatus::Unbounded => Err(Error::invalid(format!(
            "node {n} subproblem is unbounded; give its variables finite domains"
        ))),
        SolveStatus::Limit => Err(Error::invalid(format!("node {n} subproblem hit a solver limit"))),
    }
}

/// Ground truth by enumerating one distribution per non-leaf node. With a
/// zero `C` the node problems decouple once distributions are fixed.
/// Ties go to the lexicographically smallest assignment.
pub fn enumerate_oracle(problem: &MspeuProblem, params: &SolveParams) -> Result<MspeuSolution> {
    if !problem.c_is_zero {
        return Err(Error::Precondition("the oracle needs C = 0".into()));
    }
    let tree = &problem.tree;
    let decision: Vec<NodeId> = tree.non_leaves().collect();
    let radix: Vec<usize> = decision.iter().map(|&n| tree.num_distributions(n)).collect();
    let total = radix.iter().try_fold(1u64, |acc, &r| acc.checked_mul(r as u64).filter(|&v| v <= ORACLE_CAP));
    if total.is_none() {
        return Err(Error::Capacity { what: "distribution assignments", limit: ORACLE_CAP as usize });
    }
    let mut slot = vec![usize::MAX; tree.num_nodes()];
    for (k, &n) in decision.iter().enumerate() {
        slot[n.idx()] = k;
    }

    let mut cache: HashMap<(usize, Option<usize>, Option<usize>), Option<Local>> = HashMap::new();
    let mut local = |n: NodeId, own: Option<DistId>, parent: Option<DistId>| -> Result<Option<Local>> {
        let key = (n.idx(), own.map(|d| d.idx()), parent.map(|d| d.idx()));
        if let Some(v) = cache.get(&key) {
            return Ok(v.clone());
        }
        let v = solve_local(problem, n, own, parent, params)?;
        cache.insert(key, v.clone());
        Ok(v)
    };

    let nn = tree.num_nodes();
    let mut assign = vec![0usize; decision.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut value = vec![0.0; nn];
    'outer: loop {
        let dist_of = |n: NodeId| -> Option<DistId> {
            let k = slot[n.idx()];
            (k != usize::MAX).then(|| DistId(assign[k]))
        };
        let mut feasible = true;
        for t in (1..=tree.num_stages()).rev() {
            for &n in tree.stage_nodes(t) {
                let own = dist_of(n);
                let parent = tree.parent(n).and_then(dist_of);
                let Some(loc) = local(n, own, parent)? else {
                    feasible = false;
                    break;
                };
                value[n.idx()] = loc.value
                    + match own {
                        None => problem.block(n).theta_terminal.expect("validated leaf"),
                        Some(d) => tree.children(n, d).iter().map(|&m| tree.probability(m) * value[m.idx()]).sum(),
                    };
            }
            if !feasible {
                break;
            }
        }
        if feasible && best.as_ref().is_none_or(|(b, _)| value[0] > *b) {
            best = Some((value[0], assign.clone()));
        }
        // odometer, last node fastest
        for k in (0..assign.len()).rev() {
            assign[k] += 1;
            if assign[k] < radix[k] {
                continue 'outer;
            }
            assign[k] = 0;
        }
        break;
    }

    let Some((z, assign)) = best else {
        return Ok(MspeuSolution::without_point(SolveStatus::Infeasible));
    };
    let dist_of = |n: NodeId| -> Option<DistId> {
        let k = slot[n.idx()];
        (k != usize::MAX).then(|| DistId(assign[k]))
    };
    let mut sol = MspeuSolution {
        status: SolveStatus::Optimal,
        objective: z,
        x: vec![Vec::new(); nn],
        delta: vec![Vec::new(); nn],
        theta: vec![0.0; nn],
        on_policy: Vec::new(),
    };
    for t in (1..=tree.num_stages()).rev() {
        for &n in tree.stage_nodes(t) {
            let own = dist_of(n);
            let loc = local(n, own, tree.parent(n).and_then(dist_of))?.expect("feasible assignment");
            sol.theta[n.idx()] = match own {
                None => problem.block(n).theta_terminal.expect("validated leaf"),
                Some(d) => tree.children(n, d).iter().map(|&m| tree.probability(m) * value[m.idx()]).sum(),
            };
            value[n.idx()] = loc.value + sol.theta[n.idx()];
            sol.x[n.idx()] = loc.x;
            sol.delta[n.idx()] = loc.delta;
        }
    }
    sol.mark_policy(tree);
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::two_branch;
    use crate::model::{build_node_formulation, BigMTable};

    #[test]
    fn oracle_picks_the_larger_branch() {
        let p = two_branch(0, [3.0, 4.5]);
        let s = enumerate_oracle(&p, &SolveParams::default()).unwrap();
        assert_eq!(s.chosen(NodeId(0)), Some(DistId(1)));
        assert!((s.objective - 6.5).abs() < 1e-12);
        let e = evaluate_solution(&p, &s).unwrap();
        assert!(e.feasible, "{:?}", e.violations);
        assert!((e.objective - s.objective).abs() < 1e-12);
    }

    #[test]
    fn two_deltas_violate_the_choice_row() {
        let p = two_branch(0, [3.0, 4.5]);
        let mut s = enumerate_oracle(&p, &SolveParams::default()).unwrap();
        s.delta[0] = vec![1.0, 1.0];
        let e = evaluate_solution(&p, &s).unwrap();
        assert!(!e.feasible);
        assert!(e.violations.iter().any(|v| v.starts_with("choice row at node 0")));
    }

    #[test]
    fn oracle_matches_monolithic_on_two_branch() {
        let p = two_branch(1, [3.0, 4.5]);
        let o = enumerate_oracle(&p, &SolveParams::default()).unwrap();
        let f = build_node_formulation(&p, &BigMTable::filled(&p.tree, |_, _| 50.0)).unwrap();
        let m = milp::solve(&f.model, &SolveParams::default()).unwrap();
        assert!((o.objective - m.objective).abs() < 1e-9);
        let sol = f.extract(&p, &m);
        let e = evaluate_solution(&p, &sol).unwrap();
        assert!(e.feasible);
        assert!((e.objective - m.objective).abs() < 1e-9);
    }
}
