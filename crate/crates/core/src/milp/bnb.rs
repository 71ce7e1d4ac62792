use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use super::model::{MilpModel, Relation, Sense};
use super::simplex::{InverseBudget, LpStatus, Simplex, SparseLp, Tolerances, WarmStart};
use super::{MilpSolution, SolveParams, SolveStatus};
use crate::error::{Error, Result};

/// Memory allowed for basis inverses cached on open nodes.
const INVERSE_BYTES: usize = 256 << 20;

struct Prepared {
    lp: SparseLp,
    integer: Vec<bool>,
    /// +1 for minimization, -1 for maximization.
    sign: f64,
}

fn tighten(lower: &mut f64, upper: &mut f64, a: f64, rel: Relation, rhs: f64) {
    let v = rhs / a;
    let (le, ge) = match (rel, a > 0.0) {
        (Relation::Eq, _) => (true, true),
        (Relation::Le, true) | (Relation::Ge, false) => (true, false),
        (Relation::Ge, true) | (Relation::Le, false) => (false, true),
    };
    if le {
        *upper = upper.min(v);
    }
    if ge {
        *lower = lower.max(v);
    }
}

/// Builds the computational form; `None` means presolve proved infeasibility.
fn prepare(model: &MilpModel, params: &SolveParams, relax: bool) -> Result<Option<Prepared>> {
    let n = model.num_vars();
    let sign = match model.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut lower: Vec<f64> = model.vars().iter().map(|v| v.lower).collect();
    let mut upper: Vec<f64> = model.vars().iter().map(|v| v.upper).collect();
    let integer: Vec<bool> = model.vars().iter().map(|v| !relax && v.is_integer()).collect();

    let mut rows = Vec::new();
    let mut row_lo = Vec::new();
    let mut row_hi = Vec::new();
    let ftol = params.feas_tol;
    for c in model.constraints() {
        let terms: Vec<(usize, f64)> = c
            .terms
            .iter()
            .filter(|(_, a)| *a != 0.0)
            .map(|&(v, a)| (v.idx(), a))
            .collect();
        match terms.len() {
            0 => {
                let ok = match c.relation {
                    Relation::Le => 0.0 <= c.rhs + ftol,
                    Relation::Ge => 0.0 >= c.rhs - ftol,
                    Relation::Eq => c.rhs.abs() <= ftol,
                };
                if !ok {
                    return Ok(None);
                }
            }
            1 => {
                let (j, a) = terms[0];
                tighten(&mut lower[j], &mut upper[j], a, c.relation, c.rhs);
            }
            _ => {
                let (lo, hi) = match c.relation {
                    Relation::Le => (f64::NEG_INFINITY, c.rhs),
                    Relation::Ge => (c.rhs, f64::INFINITY),
                    Relation::Eq => (c.rhs, c.rhs),
                };
                rows.push(terms);
                row_lo.push(lo);
                row_hi.push(hi);
            }
        }
    }
    for j in 0..n {
        if integer[j] {
            lower[j] = (lower[j] - params.int_tol).ceil();
            upper[j] = (upper[j] + params.int_tol).floor();
        }
        if lower[j] > upper[j] {
            if lower[j] - upper[j] <= ftol {
                upper[j] = lower[j];
            } else {
                return Ok(None);
            }
        }
    }

    let nnz: usize = rows.iter().map(|r| r.len()).sum();
    if rows.len() > params.max_rows || nnz > params.max_nonzeros {
        return Err(Error::TooLarge {
            detail: format!(
                "{} rows and {} nonzeros after presolve, limits are {} and {}",
                rows.len(),
                nnz,
                params.max_rows,
                params.max_nonzeros
            ),
        });
    }

    lower.extend(row_lo);
    upper.extend(row_hi);
    let cost: Vec<f64> = model.objective().iter().map(|c| sign * c).collect();
    Ok(Some(Prepared { lp: SparseLp::new(n, rows, cost, lower, upper), integer, sign }))
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    warm: Option<Rc<WarmStart>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Max-heap order: smallest bound first, then deeper, then older.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

fn full_bounds(lp: &SparseLp, lower: &[f64], upper: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut l = lower.to_vec();
    let mut u = upper.to_vec();
    l.extend_from_slice(&lp.lower[lp.n..]);
    u.extend_from_slice(&lp.upper[lp.n..]);
    (l, u)
}

/// Index of the most fractional integer variable, lowest index on ties.
fn branching_candidate(x: &[f64], integer: &[bool], int_tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, (&v, &is_int)) in x.iter().zip(integer).enumerate() {
        if !is_int {
            continue;
        }
        let f = v - v.floor();
        let score = f.min(1.0 - f);
        if score > int_tol && best.is_none_or(|(_, s)| score > s) {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
}

struct LpOutcome {
    status: LpStatus,
    objective: f64,
    values: Vec<f64>,
    warm: Option<WarmStart>,
    iterations: usize,
}

fn solve_node(
    lp: &SparseLp,
    lower: &[f64],
    upper: &[f64],
    warm: Option<&WarmStart>,
    tol: Tolerances,
    budget: Option<&InverseBudget>,
    keep_warm: bool,
) -> Result<LpOutcome> {
    let (l, u) = full_bounds(lp, lower, upper);
    let attempt = |warm: Option<&WarmStart>| -> Result<(Simplex<'_>, LpStatus)> {
        match warm {
            Some(ws) => {
                let mut s = Simplex::warm(lp, l.clone(), u.clone(), ws, tol)?;
                let st = s.solve_dual()?;
                Ok((s, st))
            }
            None => {
                let mut s = Simplex::cold(lp, l.clone(), u.clone(), tol);
                let st = s.solve_primal()?;
                Ok((s, st))
            }
        }
    };
    let (s, status) = match attempt(warm) {
        Ok(r) => r,
        Err(Error::Numerical(msg)) if warm.is_some() => {
            log::debug!("warm start failed ({msg}); re-solving from the slack basis");
            attempt(None)?
        }
        Err(e) => return Err(e),
    };
    Ok(LpOutcome {
        status,
        objective: s.objective(),
        values: s.values().to_vec(),
        warm: keep_warm.then(|| s.warm_start(budget)),
        iterations: s.iterations,
    })
}

pub(super) fn branch_and_bound(model: &MilpModel, params: &SolveParams, relax: bool) -> Result<MilpSolution> {
    let start = Instant::now();
    let Some(prep) = prepare(model, params, relax)? else {
        return Ok(MilpSolution::without_point(SolveStatus::Infeasible, start.elapsed()));
    };
    let lp = &prep.lp;
    let n = lp.n;
    let tol = Tolerances { primal: params.feas_tol, ..Tolerances::default() };
    let budget = InverseBudget::default();
    let max_inverses = (INVERSE_BYTES / (lp.m * lp.m * 8).max(1)).max(1);
    let gap_abs = |inc: f64| params.gap_tol * inc.abs().max(1.0);
    let finish_value = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(&prep.integer)
            .map(|(&v, &is_int)| if is_int { v.round() } else { v })
            .collect()
    };

    let root_lower = lp.lower[..n].to_vec();
    let root_upper = lp.upper[..n].to_vec();
    let root = solve_node(lp, &root_lower, &root_upper, None, tol, Some(&budget), true)?;
    let mut lp_iterations = root.iterations;
    match root.status {
        LpStatus::Infeasible => {
            return Ok(MilpSolution::without_point(SolveStatus::Infeasible, start.elapsed()));
        }
        LpStatus::Unbounded => {
            return Ok(MilpSolution::without_point(SolveStatus::Unbounded, start.elapsed()));
        }
        LpStatus::Optimal => {}
    }

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut root = root;
    let root_warm = Rc::new(root.warm.take().expect("root keeps its basis"));

    // round the root relaxation for a first incumbent
    if branching_candidate(&root.values, &prep.integer, params.int_tol).is_some() {
        let mut l = root_lower.clone();
        let mut u = root_upper.clone();
        for j in 0..n {
            if prep.integer[j] {
                let r = root.values[j].round().clamp(l[j], u[j]);
                l[j] = r;
                u[j] = r;
            }
        }
        if let Ok(h) = solve_node(lp, &l, &u, Some(&root_warm), tol, None, false) {
            lp_iterations += h.iterations;
            if h.status == LpStatus::Optimal {
                let vals = finish_value(&h.values);
                if model.max_violation(&vals, params.int_tol) <= 10.0 * params.feas_tol {
                    incumbent = Some((h.objective, vals));
                }
            }
        }
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    let mut nodes = 0usize;
    let mut hit_limit = false;
    // The root is expanded from its already solved relaxation.
    let mut pending_root = Some(root);
    heap.push(Node { bound: f64::NEG_INFINITY, depth: 0, seq, lower: root_lower, upper: root_upper, warm: Some(root_warm) });
    seq += 1;

    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &incumbent {
            if node.bound >= inc - gap_abs(*inc) {
                continue;
            }
        }
        if params.node_limit.is_some_and(|lim| nodes >= lim)
            || params.time_limit.is_some_and(|t| start.elapsed() >= t)
        {
            hit_limit = true;
            heap.push(node);
            break;
        }
        nodes += 1;

        let out = match pending_root.take() {
            Some(r) => r,
            None => {
                let keep = budget.live() < max_inverses;
                let o = solve_node(
                    lp,
                    &node.lower,
                    &node.upper,
                    node.warm.as_deref(),
                    tol,
                    keep.then_some(&budget),
                    true,
                )?;
                lp_iterations += o.iterations;
                o
            }
        };
        let parent_warm = node.warm;
        if out.status != LpStatus::Optimal {
            continue;
        }
        if let Some((inc, _)) = &incumbent {
            if out.objective >= inc - gap_abs(*inc) {
                continue;
            }
        }
        match branching_candidate(&out.values, &prep.integer, params.int_tol) {
            None => {
                incumbent = Some((out.objective, finish_value(&out.values)));
            }
            Some(j) => {
                let v = out.values[j];
                // only the root arrives here without its own basis
                let warm = out.warm.map(Rc::new).or(parent_warm);
                let mut down_upper = node.upper.clone();
                down_upper[j] = v.floor();
                let mut up_lower = node.lower.clone();
                up_lower[j] = v.ceil();
                heap.push(Node {
                    bound: out.objective,
                    depth: node.depth + 1,
                    seq,
                    lower: node.lower.clone(),
                    upper: down_upper,
                    warm: warm.clone(),
                });
                seq += 1;
                heap.push(Node {
                    bound: out.objective,
                    depth: node.depth + 1,
                    seq,
                    lower: up_lower,
                    upper: node.upper,
                    warm,
                });
                seq += 1;
            }
        }
    }

    let open_bound = heap.iter().map(|nd| nd.bound).fold(f64::INFINITY, f64::min);
    let wall_time = start.elapsed();
    let to_user = |v: f64| prep.sign * v + model.objective_offset;
    match incumbent {
        Some((obj, values)) => {
            let bound = if hit_limit { open_bound.min(obj) } else { obj };
            let gap = (obj - bound).max(0.0) / obj.abs().max(1.0);
            let objective = model.evaluate_objective(&values);
            Ok(MilpSolution {
                status: if hit_limit && gap > params.gap_tol { SolveStatus::Limit } else { SolveStatus::Optimal },
                values,
                objective,
                best_bound: to_user(bound),
                gap,
                nodes,
                lp_iterations,
                wall_time,
            })
        }
        None => {
            let mut s = MilpSolution::without_point(
                if hit_limit { SolveStatus::Limit } else { SolveStatus::Infeasible },
                wall_time,
            );
            s.nodes = nodes;
            s.lp_iterations = lp_iterations;
            if hit_limit {
                s.best_bound = to_user(open_bound);
            }
            Ok(s)
        }
    }
}
