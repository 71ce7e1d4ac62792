//! The direct composition model and its image in the generic node form.
//!
//! In the generic form `x_n` holds the `|I|^2` transition binaries
//! (`x_ij` at index `i |I| + j`, diagonal included) followed by the slacks
//! of the change row and the budget row. Node values are multiplied by the
//! product of discount factors from the root, which turns the discounted
//! expectation of the direct model into the plain expectation of the
//! generic one. Leaf sunset values move into the leaf `q`.

use std::io::Write;

use serde::Serialize;

use super::{with_leaf_choices, FtcpInstance};
use crate::error::{Error, Result};
use crate::milp::{MilpModel, MilpSolution, Relation, Sense, VarId, VarKind};
use crate::model::{BigMTable, MspeuProblem, MspeuSolution, NodeBlock, VarDomain};
use crate::tree::{DistId, NodeId};

/// Product of discount factors on the path from the root (1 at the root).
pub fn scale_factors(inst: &FtcpInstance) -> Vec<f64> {
    let tree = &inst.tree;
    let mut g = vec![1.0; tree.num_nodes()];
    for n in tree.nodes() {
        if let Some(p) = tree.parent(n) {
            g[n.idx()] = g[p.idx()] * inst.discount(tree.stage(n));
        }
    }
    g
}

/// Largest budget slack any integer point can need.
fn budget_slack_bound(inst: &FtcpInstance, n: usize) -> f64 {
    let cheapest = inst.transition[n].iter().flatten().fold(0.0f64, |a, &c| a.min(c));
    inst.budget + inst.extra_budget[n] - cheapest
}

pub fn to_mspeu(inst: &FtcpInstance) -> Result<MspeuProblem> {
    inst.validate()?;
    let k = inst.num_compositions();
    let tree = with_leaf_choices(&inst.tree, k);
    let g = scale_factors(inst);
    let nx = k * k + 2;
    let rows = k + 2;
    let mut blocks = Vec::with_capacity(tree.num_nodes());
    for n in tree.nodes() {
        let ni = n.idx();
        let leaf = tree.is_leaf(n);
        let t = tree.stage(n);
        let ct = &inst.transition[ni];

        let mut r = vec![0.0; nx];
        let mut a = vec![vec![0.0; nx]; rows];
        let mut b = vec![vec![0.0; k]; rows];
        for i in 0..k {
            b[i][i] = 1.0;
            for j in 0..k {
                r[i * k + j] = -g[ni] * ct[i][j];
                a[k + 1][i * k + j] = ct[i][j];
                if i != j {
                    a[i][i * k + j] += 1.0;
                    a[i][j * k + i] -= 1.0;
                    a[k][i * k + j] = 1.0;
                }
            }
        }
        a[k][k * k] = 1.0;
        a[k + 1][k * k + 1] = 1.0;

        let sunset = if leaf { inst.discount(t + 1) } else { 0.0 };
        let q = (0..k)
            .map(|i| g[ni] * (inst.value[ni][i] - inst.salary[ni][i] + sunset * inst.value[ni][i]))
            .collect();
        let mut h = vec![0.0; rows];
        if ni == 0 {
            h[inst.initial] = 1.0;
        }
        h[k] = 1.0;
        h[k + 1] = inst.budget + inst.extra_budget[ni];

        let child_rows = if leaf { 0 } else { rows };
        let mut d = vec![vec![0.0; k]; child_rows];
        for (i, row) in d.iter_mut().enumerate().take(k) {
            row[i] = -1.0;
        }
        let mut domains = vec![VarDomain::binary(); k * k];
        domains.push(VarDomain::continuous(0.0, 1.0));
        domains.push(VarDomain::continuous(0.0, budget_slack_bound(inst, ni)));

        blocks.push(NodeBlock {
            r,
            q,
            a,
            b,
            c_to_children: vec![vec![0.0; nx]; child_rows],
            d_to_children: d,
            h,
            theta_terminal: leaf.then_some(0.0),
            domains,
        });
    }
    MspeuProblem::new(tree, blocks)
}

/// Converts an FTCP-unit table to the units of [`to_mspeu`].
pub fn to_mspeu_bigm(inst: &FtcpInstance, table: &BigMTable) -> BigMTable {
    let g = scale_factors(inst);
    table.map(|n, _, m| g[n.idx()] * m)
}

/// Inverse of [`to_mspeu_bigm`].
pub fn from_mspeu_bigm(inst: &FtcpInstance, table: &BigMTable) -> BigMTable {
    let g = scale_factors(inst);
    table.map(|n, _, m| m / g[n.idx()])
}

#[derive(Clone, Debug)]
pub struct FtcpFormulation {
    pub model: MilpModel,
    pub delta: Vec<Vec<VarId>>,
    /// `x[n][i * |I| + j]`
    pub x: Vec<Vec<VarId>>,
    pub theta: Vec<VarId>,
    /// Empty at leaves.
    pub phi: Vec<Vec<VarId>>,
}

/// The direct model. `bigm` is in FTCP units, keyed by (node, composition).
pub fn build_ftcp_milp(inst: &FtcpInstance, bigm: &BigMTable) -> Result<FtcpFormulation> {
    inst.validate()?;
    let tree = &inst.tree;
    let k = inst.num_compositions();
    let mut model = MilpModel::new(Sense::Maximize);
    let (mut delta, mut x, mut theta, mut phi) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for n in tree.nodes() {
        delta.push((0..k).map(|i| model.add_var(format!("delta_{n}_{i}"), 0.0, 1.0, VarKind::Binary)).collect::<Result<Vec<_>>>()?);
        let mut xs = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                xs.push(model.add_var(format!("x_{n}_{i}_{j}"), 0.0, 1.0, VarKind::Binary)?);
            }
        }
        x.push(xs);
        theta.push(model.add_var(format!("theta_{n}"), f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous)?);
        phi.push(if tree.is_leaf(n) {
            Vec::new()
        } else {
            (0..k)
                .map(|i| model.add_var(format!("phi_{n}_{i}"), f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous))
                .collect::<Result<Vec<_>>>()?
        });
    }

    for n in tree.nodes() {
        let ni = n.idx();
        model.add_constraint(format!("onlyone_{n}"), delta[ni].iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0)?;
        for i in 0..k {
            let mut terms = vec![(delta[ni][i], 1.0)];
            for j in (0..k).filter(|&j| j != i) {
                terms.push((x[ni][i * k + j], 1.0));
                terms.push((x[ni][j * k + i], -1.0));
            }
            let rhs = match tree.parent(n) {
                Some(p) => {
                    terms.push((delta[p.idx()][i], -1.0));
                    0.0
                }
                None => f64::from(u8::from(i == inst.initial)),
            };
            model.add_constraint(format!("hold_{n}_{i}"), terms, Relation::Eq, rhs)?;
        }
        let change = (0..k * k).filter(|c| c / k != c % k).map(|c| (x[ni][c], 1.0)).collect();
        model.add_constraint(format!("change_{n}"), change, Relation::Le, 1.0)?;
        let cost = (0..k * k)
            .filter_map(|c| {
                let v = inst.transition[ni][c / k][c % k];
                (v != 0.0).then_some((x[ni][c], v))
            })
            .collect();
        model.add_constraint(format!("budget_{n}"), cost, Relation::Le, inst.budget + inst.extra_budget[ni])?;
    }

    for n in tree.nodes() {
        let ni = n.idx();
        if tree.is_leaf(n) {
            let f = inst.discount(tree.stage(n) + 1);
            let mut terms = vec![(theta[ni], 1.0)];
            terms.extend((0..k).map(|i| (delta[ni][i], -f * inst.value[ni][i])));
            model.add_constraint(format!("sunset_{n}"), terms, Relation::Eq, 0.0)?;
            continue;
        }
        for i in 0..k {
            let m = bigm.require(n, DistId(i))?;
            let mut terms = vec![(theta[ni], 1.0), (phi[ni][i], -1.0)];
            if m != 0.0 {
                terms.push((delta[ni][i], m));
            }
            model.add_constraint(format!("value_{n}_{i}"), terms, Relation::Le, m)?;

            let mut terms = vec![(phi[ni][i], 1.0)];
            for &c in tree.children(n, DistId(i)) {
                let ci = c.idx();
                let w = inst.discount(tree.stage(c)) * tree.probability(c);
                terms.push((theta[ci], -w));
                for j in 0..k {
                    let net = inst.value[ci][j] - inst.salary[ci][j];
                    if net != 0.0 {
                        terms.push((delta[ci][j], -w * net));
                    }
                    for l in 0..k {
                        let v = inst.transition[ci][j][l];
                        if v != 0.0 {
                            terms.push((x[ci][j * k + l], w * v));
                        }
                    }
                }
            }
            model.add_constraint(format!("expect_{n}_{i}"), terms, Relation::Eq, 0.0)?;
        }
    }

    for i in 0..k {
        model.set_objective(delta[0][i], inst.value[0][i] - inst.salary[0][i]);
        for j in 0..k {
            let v = inst.transition[0][i][j];
            if v != 0.0 {
                model.set_objective(x[0][i * k + j], -v);
            }
        }
    }
    model.set_objective(theta[0], 1.0);
    Ok(FtcpFormulation { model, delta, x, theta, phi })
}

impl FtcpFormulation {
    /// Maps a point of the direct model onto the generic layout.
    pub fn extract(&self, inst: &FtcpInstance, sol: &MilpSolution) -> MspeuSolution {
        if !sol.has_solution() {
            return MspeuSolution::without_point(sol.status);
        }
        let k = inst.num_compositions();
        let tree = &inst.tree;
        let g = scale_factors(inst);
        let nn = tree.num_nodes();
        let mut out = MspeuSolution {
            status: sol.status,
            objective: sol.objective,
            x: Vec::with_capacity(nn),
            delta: Vec::with_capacity(nn),
            theta: Vec::with_capacity(nn),
            on_policy: Vec::new(),
        };
        for n in 0..nn {
            let mut xs: Vec<f64> = self.x[n].iter().map(|&v| sol.value(v).round()).collect();
            let changes: f64 = (0..k * k).filter(|c| c / k != c % k).map(|c| xs[c]).sum();
            let cost: f64 = (0..k * k).map(|c| inst.transition[n][c / k][c % k] * xs[c]).sum();
            xs.push(1.0 - changes);
            xs.push(inst.budget + inst.extra_budget[n] - cost);
            out.x.push(xs);
            out.delta.push(self.delta[n].iter().map(|&v| sol.value(v).round()).collect());
            let leaf = tree.is_leaf(NodeId(n));
            out.theta.push(if leaf { 0.0 } else { g[n] * sol.value(self.theta[n]) });
        }
        out.mark_policy(&with_leaf_choices(tree, k));
        out
    }
}

/// Objective of a generic-layout point computed with the direct model's
/// discounted recursion.
pub fn direct_objective(inst: &FtcpInstance, sol: &MspeuSolution) -> Result<f64> {
    let tree = &inst.tree;
    let k = inst.num_compositions();
    if sol.x.len() != tree.num_nodes() || sol.delta.len() != tree.num_nodes() {
        return Err(Error::invalid("solution does not cover the instance tree"));
    }
    let own = |n: usize| -> f64 {
        let d = &sol.delta[n];
        let x = &sol.x[n];
        (0..k).map(|i| (inst.value[n][i] - inst.salary[n][i]) * d[i]).sum::<f64>()
            - (0..k * k).map(|c| inst.transition[n][c / k][c % k] * x[c]).sum::<f64>()
    };
    let mut theta = vec![0.0; tree.num_nodes()];
    for t in (1..=tree.num_stages()).rev() {
        for &n in tree.stage_nodes(t) {
            let ni = n.idx();
            theta[ni] = if tree.is_leaf(n) {
                inst.discount(t + 1) * (0..k).map(|i| inst.value[ni][i] * sol.delta[ni][i]).sum::<f64>()
            } else {
                (0..k)
                    .filter(|&i| sol.delta[ni][i] > 0.5)
                    .map(|i| {
                        tree.children(n, DistId(i))
                            .iter()
                            .map(|&m| inst.discount(tree.stage(m)) * tree.probability(m) * (theta[m.idx()] + own(m.idx())))
                            .sum::<f64>()
                    })
                    .sum()
            };
        }
    }
    Ok(own(0) + theta[0])
}

/// One line of the per-node solution table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionRow {
    pub node: usize,
    pub stage: usize,
    pub prob: f64,
    pub on_policy: bool,
    pub previous: String,
    pub composition: String,
    pub switched: bool,
    pub value: f64,
    pub salary: f64,
    pub transition_cost: f64,
    pub budget_limit: f64,
}

pub fn solution_rows(inst: &FtcpInstance, sol: &MspeuSolution) -> Result<Vec<SolutionRow>> {
    let tree = &inst.tree;
    let k = inst.num_compositions();
    let pick = |n: usize| -> Result<usize> {
        sol.delta
            .get(n)
            .and_then(|d| d.iter().position(|&v| v > 0.5))
            .ok_or_else(|| Error::invalid(format!("no composition chosen at node {n}")))
    };
    let mut rows = Vec::with_capacity(tree.num_nodes());
    for n in tree.nodes() {
        let ni = n.idx();
        let i = pick(ni)?;
        let prev = match tree.parent(n) {
            Some(p) => pick(p.idx())?,
            None => inst.initial,
        };
        let cost: f64 = (0..k * k).map(|c| inst.transition[ni][c / k][c % k] * sol.x[ni][c]).sum();
        rows.push(SolutionRow {
            node: ni,
            stage: tree.stage(n),
            prob: tree.probability(n),
            on_policy: sol.on_policy.get(ni).copied().unwrap_or(false),
            previous: inst.compositions[prev].clone(),
            composition: inst.compositions[i].clone(),
            switched: prev != i,
            value: inst.value[ni][i],
            salary: inst.salary[ni][i],
            transition_cost: cost,
            budget_limit: inst.budget + inst.extra_budget[ni],
        });
    }
    Ok(rows)
}

pub fn write_solution_csv<W: Write>(rows: &[SolutionRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward::{extract_policy, solve_backward};
    use crate::bigm::{ftcp_fast_bigm, ftcp_fast_node_bounds, validate_bigm};
    use crate::ftcp::{generate_instance, GeneratorParams};
    use crate::milp::{self, SolveParams};
    use crate::model::{build_node_formulation, count_model, enumerate_oracle, evaluate_solution, Convention};

    fn tiny(k: usize, s: usize, t: usize, seed: u64) -> FtcpInstance {
        generate_instance(&GeneratorParams {
            num_compositions: k,
            samples: s,
            stages: t,
            seed,
            ..GeneratorParams::default()
        })
        .unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-6 * a.abs().max(1.0)
    }

    #[test]
    fn benchmark_table_counts() {
        let inst = tiny(3, 4, 4, 1);
        assert_eq!(inst.tree.num_nodes(), 1885);
        let c = count_model(&to_mspeu(&inst).unwrap(), Convention::TableConvention).unwrap();
        assert_eq!((c.vars, c.bins, c.cons), (24505, 16965, 22620));
    }

    #[test]
    fn mapped_problem_has_no_parent_x_coupling() {
        let p = to_mspeu(&tiny(2, 2, 3, 3)).unwrap();
        assert!(p.c_is_zero);
    }

    #[test]
    fn single_composition_has_no_choice() {
        let inst = tiny(1, 2, 3, 5);
        let f = build_ftcp_milp(&inst, &ftcp_fast_bigm(&inst)).unwrap();
        let s = milp::solve(&f.model, &SolveParams::default()).unwrap();
        // hand recursion with delta = 1 and no transfers
        let tree = &inst.tree;
        let mut v = vec![0.0; tree.num_nodes()];
        for n in tree.nodes().collect::<Vec<_>>().into_iter().rev() {
            let ni = n.idx();
            v[ni] = if tree.is_leaf(n) {
                inst.discount(tree.stage(n) + 1) * inst.value[ni][0]
            } else {
                tree.children(n, DistId(0))
                    .iter()
                    .map(|&m| {
                        let mi = m.idx();
                        inst.discount(tree.stage(m)) * tree.probability(m) * (v[mi] + inst.value[mi][0] - inst.salary[mi][0])
                    })
                    .sum()
            };
        }
        let z = inst.value[0][0] - inst.salary[0][0] + v[0];
        assert!(close(s.objective, z), "{} vs {z}", s.objective);
        let sol = f.extract(&inst, &s);
        assert!(sol.x.iter().all(|x| x[..1].iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn all_paths_agree_on_tiny_instances() {
        let params = SolveParams::default();
        for seed in 0..4 {
            let inst = tiny(2, 2, 3, seed);
            let fast = ftcp_fast_bigm(&inst);
            let direct = build_ftcp_milp(&inst, &fast).unwrap();
            let ds = milp::solve(&direct.model, &params).unwrap();
            let z = ds.objective;

            let p = to_mspeu(&inst).unwrap();
            let mapped = to_mspeu_bigm(&inst, &fast);
            let f = build_node_formulation(&p, &mapped).unwrap();
            let ms = milp::solve(&f.model, &params).unwrap();
            assert!(close(ms.objective, z), "seed {seed}: generic {} direct {z}", ms.objective);

            let b = solve_backward(&p, &mapped, &params).unwrap();
            assert!(close(b.z, z), "seed {seed}: backward {} direct {z}", b.z);
            let o = enumerate_oracle(&p, &params).unwrap();
            assert!(close(o.objective, z), "seed {seed}: oracle {} direct {z}", o.objective);

            let sol = direct.extract(&inst, &ds);
            assert!(close(direct_objective(&inst, &sol).unwrap(), z));
            let e = evaluate_solution(&p, &sol).unwrap();
            assert!(e.feasible, "{:?}", e.violations);
            assert!(close(e.objective, z));

            let pol = extract_policy(&p, &mapped, &b, &params).unwrap();
            assert!(close(direct_objective(&inst, &pol).unwrap(), z));
            for row in solution_rows(&inst, &pol).unwrap() {
                assert!(row.transition_cost <= row.budget_limit + 1e-6);
            }

            let report = validate_bigm(&p, &mapped, 1, &params).unwrap();
            assert!(report.is_ok(), "{:?}", report.issues);
        }
    }

    #[test]
    fn literal_discount_at_a_leaf() {
        let mut inst = tiny(2, 1, 3, 9);
        inst.rho = 0.1;
        let leaf = inst.tree.leaves()[0];
        assert_eq!(inst.tree.stage(leaf), 3);
        inst.value[leaf.idx()] = vec![100.0, 80.0];
        let b = ftcp_fast_node_bounds(&inst);
        assert!((b[leaf.idx()] - 100.0 / 1.0001).abs() < 1e-12);
        inst.rho = 0.0;
        assert_eq!(ftcp_fast_node_bounds(&inst)[leaf.idx()], 100.0);
    }

    #[test]
    fn bigm_units_convert_both_ways() {
        let inst = tiny(2, 2, 3, 2);
        let t = ftcp_fast_bigm(&inst);
        let back = from_mspeu_bigm(&inst, &to_mspeu_bigm(&inst, &t));
        for (n, d, m) in t.iter() {
            assert!((back.get(n, d).unwrap() - m).abs() <= 1e-12 * m.max(1.0));
        }
    }

    #[test]
    fn solution_csv_has_one_line_per_node() {
        let inst = tiny(2, 1, 2, 4);
        let p = to_mspeu(&inst).unwrap();
        let o = enumerate_oracle(&p, &SolveParams::default()).unwrap();
        let rows = solution_rows(&inst, &o).unwrap();
        let mut buf = Vec::new();
        write_solution_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + inst.tree.num_nodes());
        assert!(text.starts_with("node,stage,prob,on_policy,previous,composition,switched"));
    }
}
