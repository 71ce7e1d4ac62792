use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl VarId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

impl Variable {
    pub fn is_integer(&self) -> bool {
        self.kind != VarKind::Continuous
    }

    pub fn is_binary(&self) -> bool {
        match self.kind {
            VarKind::Binary => true,
            VarKind::Integer => self.lower >= 0.0 && self.upper <= 1.0,
            VarKind::Continuous => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.idx()]).sum()
    }

    /// Amount by which `values` violates the row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let act = self.activity(values);
        match self.relation {
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
            Relation::Eq => (act - self.rhs).abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModelCounts {
    pub vars: usize,
    pub bins: usize,
    pub cons: usize,
}

/// A mixed-integer linear program with named variables and rows.
#[derive(Clone, Debug, PartialEq)]
pub struct MilpModel {
    pub sense: Sense,
    vars: Vec<Variable>,
    cons: Vec<Constraint>,
    objective: Vec<f64>,
    pub objective_offset: f64,
    index: HashMap<String, VarId>,
}

impl MilpModel {
    pub fn new(sense: Sense) -> MilpModel {
        MilpModel {
            sense,
            vars: Vec::new(),
            cons: Vec::new(),
            objective: Vec::new(),
            objective_offset: 0.0,
            index: HashMap::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, kind: VarKind) -> Result<VarId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate variable name {name}")));
        }
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::invalid(format!("variable {name} has bounds [{lower}, {upper}]")));
        }
        let (lower, upper) = if kind == VarKind::Binary {
            (lower.max(0.0), upper.min(1.0))
        } else {
            (lower, upper)
        };
        let id = VarId(self.vars.len());
        self.index.insert(name.clone(), id);
        self.vars.push(Variable { name, lower, upper, kind });
        self.objective.push(0.0);
        Ok(id)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Result<usize> {
        let name = name.into();
        for &(v, a) in &terms {
            if v.idx() >= self.vars.len() {
                return Err(Error::invalid(format!("row {name} references unknown variable {}", v.idx())));
            }
            if !a.is_finite() {
                return Err(Error::invalid(format!("row {name} has non-finite coefficient")));
            }
        }
        if rhs.is_nan() {
            return Err(Error::invalid(format!("row {name} has NaN right-hand side")));
        }
        // merge duplicate references to the same variable
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for (v, a) in terms {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(t) => t.1 += a,
                None => merged.push((v, a)),
            }
        }
        self.cons.push(Constraint { name, terms: merged, relation, rhs });
        Ok(self.cons.len() - 1)
    }

    pub fn set_objective(&mut self, var: VarId, coef: f64) {
        self.objective[var.idx()] = coef;
    }

    pub fn add_objective(&mut self, var: VarId, coef: f64) {
        self.objective[var.idx()] += coef;
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.idx()]
    }

    pub fn var_mut(&mut self, id: VarId) -> &mut Variable {
        &mut self.vars[id.idx()]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.cons
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.cons.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.cons.iter().map(|c| c.terms.len()).sum()
    }

    pub fn counts(&self) -> ModelCounts {
        ModelCounts {
            vars: self.vars.len(),
            bins: self.vars.iter().filter(|v| v.is_binary()).count(),
            cons: self.cons.len(),
        }
    }

    pub fn evaluate_objective(&self, values: &[f64]) -> f64 {
        self.objective_offset
            + self.objective.iter().zip(values).map(|(c, x)| c * x).sum::<f64>()
    }

    /// Largest bound, integrality or row violation of `values`.
    pub fn max_violation(&self, values: &[f64], int_tol: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &x) in self.vars.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
            if v.is_integer() && (x - x.round()).abs() > int_tol {
                worst = worst.max((x - x.round()).abs());
            }
        }
        for c in &self.cons {
            worst = worst.max(c.violation(values));
        }
        worst
    }

    pub fn check_well_formed(&self) -> Result<()> {
        for v in &self.vars {
            if v.lower > v.upper || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(Error::invalid(format!("variable {} has empty domain", v.name)));
            }
        }
        for c in &self.objective {
            if !c.is_finite() {
                return Err(Error::invalid("non-finite objective coefficient"));
            }
        }
        Ok(())
    }
}
