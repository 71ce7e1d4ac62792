use serde::{Deserialize, Serialize};

use super::{BigMTable, MspeuProblem, MspeuSolution, VarDomain};
use crate::error::{Error, Result};
use crate::milp::{MilpModel, MilpSolution, ModelCounts, Relation, Sense, VarId, VarKind};
use crate::tree::{DistId, NodeId};

fn kind_of(d: &VarDomain) -> VarKind {
    if d.is_binary() {
        VarKind::Binary
    } else if d.integer {
        VarKind::Integer
    } else {
        VarKind::Continuous
    }
}

/// The big-M model with handles to every node's variables.
#[derive(Clone, Debug)]
pub struct NodeFormulation {
    pub model: MilpModel,
    pub x: Vec<Vec<VarId>>,
    pub delta: Vec<Vec<VarId>>,
    pub theta: Vec<VarId>,
}

impl NodeFormulation {
    /// Maps a MILP point back onto the tree.
    pub fn extract(&self, problem: &MspeuProblem, sol: &MilpSolution) -> MspeuSolution {
        if !sol.has_solution() {
            return MspeuSolution::without_point(sol.status);
        }
        let pick = |ids: &Vec<VarId>| ids.iter().map(|&v| sol.value(v)).collect::<Vec<_>>();
        let mut out = MspeuSolution {
            status: sol.status,
            objective: sol.objective,
            x: self.x.iter().map(pick).collect(),
            delta: self.delta.iter().map(pick).collect(),
            theta: self.theta.iter().map(|&v| sol.value(v)).collect(),
            on_policy: Vec::new(),
        };
        out.mark_policy(&problem.tree);
        out
    }
}

/// Variables of one node inside a local model.
#[derive(Clone, Debug)]
pub(crate) struct LocalBlock {
    pub x: Vec<VarId>,
    pub delta: Vec<VarId>,
}

/// Adds `x_n`, `delta_n`, the choice row and the linking rows of `n` to
/// `model`, with the parent's distribution fixed to `parent_dist` (its
/// contribution moves to the right-hand side). Requires a zero `C`.
pub(crate) fn add_local_block(
    model: &mut MilpModel,
    problem: &MspeuProblem,
    n: NodeId,
    parent_dist: Option<DistId>,
) -> Result<LocalBlock> {
    let tree = &problem.tree;
    let b = problem.block(n);
    let x = b
        .domains
        .iter()
        .enumerate()
        .map(|(j, d)| model.add_var(format!("x_{n}_{j}"), d.lower, d.upper, kind_of(d)))
        .collect::<Result<Vec<_>>>()?;
    let delta = (0..tree.num_distributions(n))
        .map(|d| model.add_var(format!("delta_{n}_{d}"), 0.0, 1.0, VarKind::Binary))
        .collect::<Result<Vec<_>>>()?;
    if !delta.is_empty() {
        model.add_constraint(format!("choice_{n}"), delta.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0)?;
    }
    let parent_d = match (tree.parent(n), parent_dist) {
        (Some(p), Some(k)) => Some(problem.block(p).d_to_children.iter().map(|row| row[k.idx()]).collect::<Vec<f64>>()),
        (Some(_), None) => {
            return Err(Error::Precondition(format!("node {n} needs its parent's distribution fixed")));
        }
        (None, _) => None,
    };
    for i in 0..b.num_rows() {
        let mut terms: Vec<(VarId, f64)> = Vec::new();
        terms.extend(x.iter().zip(&b.a[i]).filter(|(_, &a)| a != 0.0).map(|(&v, &a)| (v, a)));
        terms.extend(delta.iter().zip(&b.b[i]).filter(|(_, &a)| a != 0.0).map(|(&v, &a)| (v, a)));
        let rhs = b.h[i] - parent_d.as_ref().map_or(0.0, |col| col[i]);
        model.add_constraint(format!("link_{n}_{i}"), terms, Relation::Eq, rhs)?;
    }
    Ok(LocalBlock { x, delta })
}

/// Objective terms `r_n x_n + q_n delta_n`, scaled by `w`.
pub(crate) fn add_node_value(model: &mut MilpModel, problem: &MspeuProblem, n: NodeId, vars: &LocalBlock, w: f64) {
    let b = problem.block(n);
    for (&v, &r) in vars.x.iter().zip(&b.r) {
        model.add_objective(v, w * r);
    }
    for (&v, &q) in vars.delta.iter().zip(&b.q) {
        model.add_objective(v, w * q);
    }
}

/// Builds the linearized monolithic model.
pub fn build_node_formulation(problem: &MspeuProblem, bigm: &BigMTable) -> Result<NodeFormulation> {
    let tree = &problem.tree;
    for n in tree.non_leaves() {
        for d in 0..tree.num_distributions(n) {
            bigm.require(n, DistId(d))?;
        }
    }
    let mut model = MilpModel::new(Sense::Maximize);
    let mut x = Vec::with_capacity(tree.num_nodes());
    let mut delta = Vec::with_capacity(tree.num_nodes());
    let mut theta = Vec::with_capacity(tree.num_nodes());
    for n in tree.nodes() {
        let b = problem.block(n);
        x.push(
            b.domains
                .iter()
                .enumerate()
                .map(|(j, d)| model.add_var(format!("x_{n}_{j}"), d.lower, d.upper, kind_of(d)))
                .collect::<Result<Vec<_>>>()?,
        );
        delta.push(
            (0..tree.num_distributions(n))
                .map(|d| model.add_var(format!("delta_{n}_{d}"), 0.0, 1.0, VarKind::Binary))
                .collect::<Result<Vec<_>>>()?,
        );
        theta.push(model.add_var(format!("theta_{n}"), f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous)?);
    }

    for n in tree.nodes() {
        if !delta[n.idx()].is_empty() {
            let terms = delta[n.idx()].iter().map(|&v| (v, 1.0)).collect();
            model.add_constraint(format!("choice_{n}"), terms, Relation::Eq, 1.0)?;
        }
    }
    for n in tree.nodes() {
        let b = problem.block(n);
        let parent = tree.parent(n);
        for i in 0..b.num_rows() {
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            let nz = |(&v, &a): (&VarId, &f64)| (a != 0.0).then_some((v, a));
            terms.extend(x[n.idx()].iter().zip(&b.a[i]).filter_map(nz));
            terms.extend(delta[n.idx()].iter().zip(&b.b[i]).filter_map(nz));
            if let Some(p) = parent {
                let pb = problem.block(p);
                terms.extend(x[p.idx()].iter().zip(&pb.c_to_children[i]).filter_map(nz));
                terms.extend(delta[p.idx()].iter().zip(&pb.d_to_children[i]).filter_map(nz));
            }
            model.add_constraint(format!("link_{n}_{i}"), terms, Relation::Eq, b.h[i])?;
        }
    }
    for n in tree.nodes() {
        if tree.is_leaf(n) {
            let v = problem.block(n).theta_terminal.expect("validated leaf");
            model.add_constraint(format!("terminal_{n}"), vec![(theta[n.idx()], 1.0)], Relation::Eq, v)?;
            continue;
        }
        for d in 0..tree.num_distributions(n) {
            let dist = DistId(d);
            let m = bigm.require(n, dist)?;
            // theta_n - sum_m pi_m (r x + q delta + theta_m) + M delta_nd <= M
            let mut terms = vec![(theta[n.idx()], 1.0)];
            for &c in tree.children(n, dist) {
                let pi = tree.probability(c);
                let cb = problem.block(c);
                terms.extend(x[c.idx()].iter().zip(&cb.r).filter(|(_, &r)| r != 0.0).map(|(&v, &r)| (v, -pi * r)));
                terms.extend(delta[c.idx()].iter().zip(&cb.q).filter(|(_, &q)| q != 0.0).map(|(&v, &q)| (v, -pi * q)));
                terms.push((theta[c.idx()], -pi));
            }
            if m != 0.0 {
                terms.push((delta[n.idx()][d], m));
            }
            model.add_constraint(format!("value_{n}_{d}"), terms, Relation::Le, m)?;
        }
    }

    let root = NodeId::ROOT;
    let rb = problem.block(root);
    for (&v, &r) in x[0].iter().zip(&rb.r) {
        model.set_objective(v, r);
    }
    for (&v, &q) in delta[0].iter().zip(&rb.q) {
        model.set_objective(v, q);
    }
    model.set_objective(theta[0], 1.0);
    Ok(NodeFormulation { model, x, delta, theta })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Every variable and row of the formulation.
    AllVars,
    /// The per-node counts used in the benchmark tables.
    TableConvention,
}

/// Model size without building the model.
pub fn count_model(problem: &MspeuProblem, convention: Convention) -> Result<ModelCounts> {
    let tree = &problem.tree;
    match convention {
        Convention::AllVars => {
            let mut c = ModelCounts { vars: 0, bins: 0, cons: 0 };
            for n in tree.nodes() {
                let b = problem.block(n);
                let nd = tree.num_distributions(n);
                c.vars += b.num_x() + nd + 1;
                c.bins += nd + b.domains.iter().filter(|d| d.is_binary()).count();
                c.cons += usize::from(nd > 0) + b.num_rows() + if tree.is_leaf(n) { 1 } else { nd };
            }
            Ok(c)
        }
        Convention::TableConvention => {
            let k = tree.num_distributions(NodeId::ROOT);
            for n in tree.nodes() {
                let b = problem.block(n);
                let nd = tree.num_distributions(n);
                if nd != k || b.num_x() != k * k + 2 || b.num_rows() != k + 2 {
                    return Err(Error::Convention(format!(
                        "node {n} has {nd} distributions, {} decisions and {} rows; \
                         the table convention needs a team-composition problem with |I| = {k}",
                        b.num_x(),
                        b.num_rows()
                    )));
                }
            }
            let nodes = tree.num_nodes();
            Ok(ModelCounts { vars: (k * k + k + 1) * nodes, bins: k * k * nodes, cons: (3 * k + 3) * nodes })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{self, SolveParams};
    use crate::model::testing::two_branch;

    #[test]
    fn hand_counted_two_stage_model() {
        let p = two_branch(1, [3.0, 4.5]);
        let f = build_node_formulation(&p, &BigMTable::zeros(&p.tree)).unwrap();
        let c = f.model.counts();
        assert_eq!((c.vars, c.cons), (10, 10));
        assert_eq!(count_model(&p, Convention::AllVars).unwrap(), c);
    }

    #[test]
    fn missing_bigm_is_reported() {
        let p = two_branch(1, [3.0, 4.5]);
        let err = build_node_formulation(&p, &BigMTable::new()).unwrap_err();
        assert!(matches!(err, Error::MissingBigM { node: 0, dist: 0 }));
    }

    #[test]
    fn two_branch_picks_higher_expectation() {
        let p = two_branch(1, [3.0, 4.5]);
        let bigm = BigMTable::filled(&p.tree, |_, _| 100.0);
        let f = build_node_formulation(&p, &bigm).unwrap();
        let s = milp::solve(&f.model, &SolveParams::default()).unwrap();
        // root x = 1, child x = 1, theta leaf 4.5
        assert!((s.objective - (1.0 + 1.0 + 4.5)).abs() < 1e-9);
        let sol = f.extract(&p, &s);
        assert_eq!(sol.chosen(NodeId(0)), Some(DistId(1)));
        assert_eq!(sol.on_policy, vec![true, false, true]);
    }

    #[test]
    fn table_convention_rejects_other_shapes() {
        let p = two_branch(1, [3.0, 4.5]);
        assert!(matches!(count_model(&p, Convention::TableConvention), Err(Error::Convention(_))));
    }
}
