//! Exact mixed-integer linear programming at desk scale.
//!
//! [`solve`] runs a best-bound branch-and-bound over LP relaxations solved
//! by a bounded-variable revised simplex; child nodes re-optimize from the
//! parent basis with the dual simplex. Models that are too large for the
//! dense basis inverse can be written out with [`lp_format::write_lp`] and
//! handed to an external solver through [`Backend::External`].

mod bnb;
pub mod external;
pub mod lp_format;
mod model;
mod simplex;

use std::time::Duration;

use serde::Serialize;

pub use model::{Constraint, MilpModel, ModelCounts, Relation, Sense, VarId, VarKind, Variable};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Builtin,
    /// `external:<command>`; the command is invoked as
    /// `<command> <model.lp> <solution.txt>`.
    External(String),
}

impl Backend {
    pub fn parse(spec: &str) -> Result<Backend> {
        match spec.trim() {
            "" | "builtin" => Ok(Backend::Builtin),
            s => match s.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(Backend::External(cmd.trim().to_string())),
                _ => Err(Error::invalid(format!(
                    "solver spec `{s}` is neither `builtin` nor `external:<command>`"
                ))),
            },
        }
    }

    /// Reads `MSPEU_SOLVER`; unset means the built-in engine.
    pub fn from_env() -> Result<Backend> {
        match std::env::var("MSPEU_SOLVER") {
            Ok(v) => Backend::parse(&v),
            Err(_) => Ok(Backend::Builtin),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveParams {
    pub int_tol: f64,
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub node_limit: Option<usize>,
    pub time_limit: Option<Duration>,
    /// Recorded for reproducibility; the engine has no randomized steps.
    pub seed: u64,
    /// Size guard on rows kept after presolve.
    pub max_rows: usize,
    pub max_nonzeros: usize,
    pub backend: Backend,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            int_tol: 1e-6,
            gap_tol: 1e-6,
            feas_tol: 1e-7,
            node_limit: None,
            time_limit: None,
            seed: 0,
            max_rows: 4_000,
            max_nonzeros: 200_000,
            backend: Backend::Builtin,
        }
    }
}

impl SolveParams {
    fn check(&self) -> Result<()> {
        if !(self.int_tol > 0.0 && self.gap_tol > 0.0 && self.feas_tol > 0.0) {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Limit => "limit",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MilpSolution {
    pub status: SolveStatus,
    /// Empty when no feasible point is known.
    pub values: Vec<f64>,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl MilpSolution {
    pub fn has_solution(&self) -> bool {
        !self.values.is_empty()
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.idx()]
    }

    pub(crate) fn without_point(status: SolveStatus, wall_time: Duration) -> MilpSolution {
        MilpSolution {
            status,
            values: Vec::new(),
            objective: f64::NAN,
            best_bound: f64::NAN,
            gap: f64::NAN,
            nodes: 0,
            lp_iterations: 0,
            wall_time,
        }
    }
}

/// Solves `model` to proven optimality within `params.gap_tol`.
pub fn solve(model: &MilpModel, params: &SolveParams) -> Result<MilpSolution> {
    params.check()?;
    model.check_well_formed()?;
    match &params.backend {
        Backend::Builtin => bnb::branch_and_bound(model, params, false),
        Backend::External(cmd) => external::solve_external(model, cmd),
    }
}

/// Solves the LP relaxation (integrality dropped) with the built-in engine.
pub fn lp_relax_solve(model: &MilpModel, params: &SolveParams) -> Result<MilpSolution> {
    params.check()?;
    model.check_well_formed()?;
    bnb::branch_and_bound(model, params, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inf() -> f64 {
        f64::INFINITY
    }

    #[test]
    fn single_integer_rounds_down() {
        let mut m = MilpModel::new(Sense::Maximize);
        let x = m.add_var("x", 0.0, 3.7, VarKind::Integer).unwrap();
        m.set_objective(x, 1.0);
        let s = solve(&m, &SolveParams::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.value(x), 3.0);
        assert_eq!(s.objective, 3.0);
    }

    #[test]
    fn textbook_lp() {
        let mut m = MilpModel::new(Sense::Maximize);
        let a = m.add_var("a", 0.0, inf(), VarKind::Continuous).unwrap();
        let b = m.add_var("b", 0.0, inf(), VarKind::Continuous).unwrap();
        m.set_objective(a, 5.0);
        m.set_objective(b, 4.0);
        m.add_constraint("c1", vec![(a, 6.0), (b, 4.0)], Relation::Le, 24.0).unwrap();
        m.add_constraint("c2", vec![(a, 1.0), (b, 2.0)], Relation::Le, 6.0).unwrap();
        let s = solve(&m, &SolveParams::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 21.0).abs() < 1e-9);
        assert!((s.value(a) - 3.0).abs() < 1e-9 && (s.value(b) - 1.5).abs() < 1e-9);
        let r = lp_relax_solve(&m, &SolveParams::default()).unwrap();
        assert!((r.objective - s.objective).abs() < 1e-12);
    }

    #[test]
    fn relaxation_gap() {
        let mut m = MilpModel::new(Sense::Maximize);
        let x = m.add_var("x", 0.0, 1.0, VarKind::Binary).unwrap();
        m.set_objective(x, 1.0);
        m.add_constraint("cap", vec![(x, 1.0), ], Relation::Le, 0.4).unwrap();
        let r = lp_relax_solve(&m, &SolveParams::default()).unwrap();
        assert!((r.objective - 0.4).abs() < 1e-9);
        let s = solve(&m, &SolveParams::default()).unwrap();
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn infeasible_and_unbounded_models() {
        let mut m = MilpModel::new(Sense::Minimize);
        let x = m.add_var("x", 0.0, 10.0, VarKind::Integer).unwrap();
        let y = m.add_var("y", 0.0, 10.0, VarKind::Integer).unwrap();
        m.add_constraint("odd", vec![(x, 2.0), (y, 2.0)], Relation::Eq, 3.0).unwrap();
        assert_eq!(solve(&m, &SolveParams::default()).unwrap().status, SolveStatus::Infeasible);

        let mut m = MilpModel::new(Sense::Maximize);
        let x = m.add_var("x", 0.0, inf(), VarKind::Continuous).unwrap();
        m.set_objective(x, 1.0);
        assert_eq!(solve(&m, &SolveParams::default()).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn knapsack_needs_branching() {
        // max 8a + 11b + 6c + 4d, 5a + 7b + 4c + 3d <= 14, binary -> 21
        let mut m = MilpModel::new(Sense::Maximize);
        let w = [5.0, 7.0, 4.0, 3.0];
        let p = [8.0, 11.0, 6.0, 4.0];
        let vars: Vec<_> = (0..4)
            .map(|i| m.add_var(format!("x{i}"), 0.0, 1.0, VarKind::Binary).unwrap())
            .collect();
        for i in 0..4 {
            m.set_objective(vars[i], p[i]);
        }
        m.add_constraint("cap", vars.iter().zip(w).map(|(&v, a)| (v, a)).collect(), Relation::Le, 14.0)
            .unwrap();
        let s = solve(&m, &SolveParams::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 21.0).abs() < 1e-9);
        assert!(s.nodes > 1);
        assert!(m.max_violation(&s.values, 1e-6) < 1e-7);
    }

    #[test]
    fn node_limit_reports_limit() {
        let mut m = MilpModel::new(Sense::Maximize);
        let w = [5.0, 7.0, 4.0, 3.0];
        let p = [8.0, 11.0, 6.0, 4.0];
        let vars: Vec<_> = (0..4)
            .map(|i| m.add_var(format!("x{i}"), 0.0, 1.0, VarKind::Binary).unwrap())
            .collect();
        for i in 0..4 {
            m.set_objective(vars[i], p[i]);
        }
        m.add_constraint("cap", vars.iter().zip(w).map(|(&v, a)| (v, a)).collect(), Relation::Le, 14.0)
            .unwrap();
        let params = SolveParams { node_limit: Some(1), ..Default::default() };
        let s = solve(&m, &params).unwrap();
        assert_eq!(s.status, SolveStatus::Limit);
        assert!(s.best_bound >= 21.0 - 1e-9);
    }

    #[test]
    fn size_guard() {
        let mut m = MilpModel::new(Sense::Maximize);
        let x = m.add_var("x", 0.0, 1.0, VarKind::Continuous).unwrap();
        let y = m.add_var("y", 0.0, 1.0, VarKind::Continuous).unwrap();
        for i in 0..5 {
            m.add_constraint(format!("r{i}"), vec![(x, 1.0), (y, 1.0)], Relation::Le, 1.0 + i as f64).unwrap();
        }
        let params = SolveParams { max_rows: 3, ..Default::default() };
        assert!(matches!(solve(&m, &params), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn backend_parsing() {
        assert_eq!(Backend::parse("builtin").unwrap(), Backend::Builtin);
        assert_eq!(Backend::parse("external:cbc -x").unwrap(), Backend::External("cbc -x".into()));
        assert!(Backend::parse("cplex").is_err());
    }
}
