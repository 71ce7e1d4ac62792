//! Bounded-variable revised simplex with an explicit dense basis inverse.
//!
//! Rows are stored as `a_i x - s_i = 0` with one logical `s_i` per row that
//! carries the row bounds, so every constraint of the engine is a variable
//! bound. The primal method uses a composite phase 1 (minimize the sum of
//! infeasibilities); the dual method re-optimizes after bound changes and is
//! what branch-and-bound uses for warm starts.

use std::rc::Rc;
use std::cell::Cell;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_BUDGET: usize = 50;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Tolerances {
    pub primal: f64,
    pub dual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { primal: 1e-7, dual: 1e-9 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Status {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Minimization LP in computational form.
#[derive(Clone, Debug)]
pub(crate) struct SparseLp {
    pub n: usize,
    pub m: usize,
    pub cols: Vec<Vec<(usize, f64)>>,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub cost: Vec<f64>,
    /// Bounds of the structurals followed by the row bounds.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SparseLp {
    pub fn new(n: usize, rows: Vec<Vec<(usize, f64)>>, cost: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> SparseLp {
        let m = rows.len();
        let mut cols = vec![Vec::new(); n];
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                cols[j].push((i, v));
            }
        }
        debug_assert_eq!(lower.len(), n + m);
        SparseLp { n, m, cols, rows, cost, lower, upper }
    }

    fn cost_of(&self, j: usize) -> f64 {
        if j < self.n {
            self.cost[j]
        } else {
            0.0
        }
    }
}

/// Counts live stored basis inverses so callers can cap memory.
#[derive(Clone, Debug, Default)]
pub(crate) struct InverseBudget(Rc<Cell<usize>>);

impl InverseBudget {
    pub fn live(&self) -> usize {
        self.0.get()
    }
}

#[derive(Debug)]
pub(crate) struct StoredInverse {
    data: Vec<f64>,
    budget: InverseBudget,
}

impl Drop for StoredInverse {
    fn drop(&mut self) {
        self.budget.0.set(self.budget.0.get() - 1);
    }
}

#[derive(Debug)]
pub(crate) struct WarmStart {
    head: Vec<usize>,
    status: Vec<Status>,
    binv: Option<StoredInverse>,
}

pub(crate) struct Simplex<'a> {
    lp: &'a SparseLp,
    lower: Vec<f64>,
    upper: Vec<f64>,
    head: Vec<usize>,
    status: Vec<Status>,
    binv: Vec<f64>,
    x: Vec<f64>,
    tol: Tolerances,
    since_refactor: usize,
    pub iterations: usize,
    max_iterations: usize,
}

fn initial_status(l: f64, u: f64) -> Status {
    if l.is_finite() {
        Status::Lower
    } else if u.is_finite() {
        Status::Upper
    } else {
        Status::Free
    }
}

impl<'a> Simplex<'a> {
    /// Slack basis with structurals at a finite bound.
    pub fn cold(lp: &'a SparseLp, lower: Vec<f64>, upper: Vec<f64>, tol: Tolerances) -> Simplex<'a> {
        let (n, m) = (lp.n, lp.m);
        let mut status = Vec::with_capacity(n + m);
        for j in 0..n {
            status.push(initial_status(lower[j], upper[j]));
        }
        status.extend(std::iter::repeat_n(Status::Basic, m));
        let head: Vec<usize> = (n..n + m).collect();
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = -1.0;
        }
        let mut s = Simplex {
            lp,
            lower,
            upper,
            head,
            status,
            binv,
            x: vec![0.0; n + m],
            tol,
            since_refactor: 0,
            iterations: 0,
            max_iterations: 200 * (n + m) + 10_000,
        };
        s.recompute_x();
        s
    }

    pub fn warm(
        lp: &'a SparseLp,
        lower: Vec<f64>,
        upper: Vec<f64>,
        ws: &WarmStart,
        tol: Tolerances,
    ) -> Result<Simplex<'a>> {
        let (n, m) = (lp.n, lp.m);
        let mut s = Simplex {
            lp,
            lower,
            upper,
            head: ws.head.clone(),
            status: ws.status.clone(),
            binv: Vec::new(),
            x: vec![0.0; n + m],
            tol,
            since_refactor: 0,
            iterations: 0,
            max_iterations: 200 * (n + m) + 10_000,
        };
        match &ws.binv {
            Some(stored) => s.binv = stored.data.clone(),
            None => {
                s.binv = vec![0.0; m * m];
                s.refactor()?;
            }
        }
        for j in 0..n + m {
            let (l, u) = (s.lower[j], s.upper[j]);
            s.status[j] = match s.status[j] {
                Status::Basic => Status::Basic,
                Status::Lower if l.is_finite() => Status::Lower,
                Status::Upper if u.is_finite() => Status::Upper,
                Status::Free if !l.is_finite() && !u.is_finite() => Status::Free,
                _ => initial_status(l, u),
            };
        }
        s.recompute_x();
        Ok(s)
    }

    pub fn warm_start(&self, budget: Option<&InverseBudget>) -> WarmStart {
        let binv = budget.map(|b| {
            b.0.set(b.0.get() + 1);
            StoredInverse { data: self.binv.clone(), budget: b.clone() }
        });
        WarmStart { head: self.head.clone(), status: self.status.clone(), binv }
    }

    pub fn values(&self) -> &[f64] {
        &self.x[..self.lp.n]
    }

    pub fn objective(&self) -> f64 {
        (0..self.lp.n).map(|j| self.lp.cost[j] * self.x[j]).sum()
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            Status::Lower => self.lower[j],
            Status::Upper => self.upper[j],
            Status::Free => 0.0,
            Status::Basic => self.x[j],
        }
    }

    /// Coefficient of column `j` in row `i` of the computational form.
    fn column(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.lp.n {
            self.lp.cols[j].clone()
        } else {
            vec![(j - self.lp.n, -1.0)]
        }
    }

    /// `B^{-1} a_j`
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.lp.m;
        let col = self.column(j);
        let mut out = vec![0.0; m];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.binv[i * m..(i + 1) * m];
            let mut acc = 0.0;
            for &(k, v) in &col {
                acc += row[k] * v;
            }
            *o = acc;
        }
        out
    }

    /// `rho^T A` for every column, structurals then logicals.
    fn row_times_a(&self, rho: &[f64]) -> Vec<f64> {
        let (n, m) = (self.lp.n, self.lp.m);
        let mut out = vec![0.0; n + m];
        for (i, &r) in rho.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            for &(j, v) in &self.lp.rows[i] {
                out[j] += r * v;
            }
            out[n + i] = -r;
        }
        out
    }

    fn recompute_x(&mut self) {
        let (n, m) = (self.lp.n, self.lp.m);
        let mut rhs = vec![0.0; m];
        for j in 0..n + m {
            if self.status[j] == Status::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v == 0.0 {
                continue;
            }
            if j < n {
                for &(i, a) in &self.lp.cols[j] {
                    rhs[i] -= a * v;
                }
            } else {
                rhs[j - n] += v;
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            self.x[self.head[r]] = v;
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.lp.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        // augmented [B | I], Gauss-Jordan with partial pivoting
        let w = 2 * m;
        let mut a = vec![0.0; m * w];
        for (k, &j) in self.head.iter().enumerate() {
            for (i, v) in self.column(j) {
                a[i * w + k] = v;
            }
        }
        for i in 0..m {
            a[i * w + m + i] = 1.0;
        }
        for c in 0..m {
            let mut best = c;
            let mut best_abs = a[c * w + c].abs();
            for r in c + 1..m {
                let v = a[r * w + c].abs();
                if v > best_abs {
                    best = r;
                    best_abs = v;
                }
            }
            if best_abs < 1e-11 {
                return Err(Error::Numerical("singular basis during refactorization".into()));
            }
            if best != c {
                for k in 0..w {
                    a.swap(c * w + k, best * w + k);
                }
            }
            let p = a[c * w + c];
            for k in 0..w {
                a[c * w + k] /= p;
            }
            let pivot_row: Vec<f64> = a[c * w..(c + 1) * w].to_vec();
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = a[r * w + c];
                if f == 0.0 {
                    continue;
                }
                let row = &mut a[r * w..(r + 1) * w];
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
            }
        }
        // after elimination row k of the right half is row k of B^{-1}
        for r in 0..m {
            self.binv[r * m..(r + 1) * m].copy_from_slice(&a[r * w + m..(r + 1) * w]);
        }
        self.recompute_x();
        Ok(())
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.lp.m;
        let p = alpha[r];
        {
            let row = &mut self.binv[r * m..(r + 1) * m];
            for v in row.iter_mut() {
                *v /= p;
            }
        }
        let pivot_row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
        for (i, &f) in alpha.iter().enumerate() {
            if i == r || f == 0.0 {
                continue;
            }
            let row = &mut self.binv[i * m..(i + 1) * m];
            for (x, y) in row.iter_mut().zip(&pivot_row) {
                *x -= f * y;
            }
        }
        self.head[r] = q;
        self.status[q] = Status::Basic;
        self.since_refactor += 1;
        self.iterations += 1;
    }

    fn check_budget(&self) -> Result<()> {
        if self.iterations > self.max_iterations {
            return Err(Error::Numerical(format!(
                "iteration budget of {} exhausted",
                self.max_iterations
            )));
        }
        Ok(())
    }

    fn basic_costs(&self, phase1: bool) -> Vec<f64> {
        self.head
            .iter()
            .map(|&j| {
                if phase1 {
                    if self.x[j] < self.lower[j] - self.tol.primal {
                        -1.0
                    } else if self.x[j] > self.upper[j] + self.tol.primal {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    self.lp.cost_of(j)
                }
            })
            .collect()
    }

    /// Reduced costs of every column for the given basic costs.
    fn reduced_costs(&self, cb: &[f64], phase1: bool) -> Vec<f64> {
        let (n, m) = (self.lp.n, self.lp.m);
        let mut y = vec![0.0; m];
        for (i, &c) in cb.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let row = &self.binv[i * m..(i + 1) * m];
            for (yk, b) in y.iter_mut().zip(row) {
                *yk += c * b;
            }
        }
        let ya = self.row_times_a(&y);
        let mut d = vec![0.0; n + m];
        for j in 0..n + m {
            if self.status[j] == Status::Basic {
                continue;
            }
            let c = if phase1 { 0.0 } else { self.lp.cost_of(j) };
            d[j] = c - ya[j];
        }
        d
    }

    fn primal_infeasible(&self) -> bool {
        self.head.iter().any(|&j| {
            self.x[j] < self.lower[j] - self.tol.primal || self.x[j] > self.upper[j] + self.tol.primal
        })
    }

    fn dual_infeasible(&self, d: &[f64]) -> bool {
        (0..d.len()).any(|j| self.entering_direction(j, d[j]).is_some())
    }

    /// Direction in which nonbasic `j` improves the objective, if any.
    fn entering_direction(&self, j: usize, dj: f64) -> Option<f64> {
        if self.lower[j] == self.upper[j] {
            return None;
        }
        match self.status[j] {
            Status::Basic => None,
            Status::Lower if dj < -self.tol.dual => Some(1.0),
            Status::Upper if dj > self.tol.dual => Some(-1.0),
            Status::Free if dj.abs() > self.tol.dual => Some(if dj < 0.0 { 1.0 } else { -1.0 }),
            _ => None,
        }
    }

    pub fn solve_primal(&mut self) -> Result<LpStatus> {
        let mut degenerate_run = 0usize;
        loop {
            self.check_budget()?;
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let phase1 = self.primal_infeasible();
            let cb = self.basic_costs(phase1);
            let d = self.reduced_costs(&cb, phase1);
            let bland = degenerate_run > DEGENERATE_BUDGET;

            let mut enter: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for (j, &dj) in d.iter().enumerate() {
                if let Some(dir) = self.entering_direction(j, dj) {
                    if bland {
                        enter = Some((j, dir));
                        break;
                    }
                    if dj.abs() > best {
                        best = dj.abs();
                        enter = Some((j, dir));
                    }
                }
            }
            let Some((q, dir)) = enter else {
                return Ok(if phase1 { LpStatus::Infeasible } else { LpStatus::Optimal });
            };

            let alpha = self.ftran(q);
            let ptol = self.tol.primal;
            // rate of change of each basic per unit step of the entering variable
            let rate = |i: usize| -dir * alpha[i];
            let target = |s: &Self, i: usize, g: f64| -> Option<f64> {
                let j = s.head[i];
                let (x, l, u) = (s.x[j], s.lower[j], s.upper[j]);
                if g > 0.0 {
                    if phase1 && x < l - ptol {
                        Some(l)
                    } else if phase1 && x > u + ptol {
                        None
                    } else if u.is_finite() {
                        Some(u)
                    } else {
                        None
                    }
                } else if phase1 && x > u + ptol {
                    Some(u)
                } else if phase1 && x < l - ptol {
                    None
                } else if l.is_finite() {
                    Some(l)
                } else {
                    None
                }
            };

            let mut leave: Option<usize> = None;
            let mut leave_bound = 0.0;
            let mut step = f64::INFINITY;
            if bland {
                for i in 0..self.lp.m {
                    let g = rate(i);
                    if g.abs() <= PIVOT_TOL {
                        continue;
                    }
                    if let Some(b) = target(self, i, g) {
                        let t = ((b - self.x[self.head[i]]) / g).max(0.0);
                        let better = match leave {
                            None => true,
                            Some(k) => t < step || (t == step && self.head[i] < self.head[k]),
                        };
                        if better {
                            step = t;
                            leave = Some(i);
                            leave_bound = b;
                        }
                    }
                }
            } else {
                let mut limit = f64::INFINITY;
                for i in 0..self.lp.m {
                    let g = rate(i);
                    if g.abs() <= PIVOT_TOL {
                        continue;
                    }
                    if let Some(b) = target(self, i, g) {
                        let slack = if g > 0.0 { ptol } else { -ptol };
                        let t = (b + slack - self.x[self.head[i]]) / g;
                        limit = limit.min(t);
                    }
                }
                let mut best_abs = 0.0;
                for i in 0..self.lp.m {
                    let g = rate(i);
                    if g.abs() <= PIVOT_TOL {
                        continue;
                    }
                    if let Some(b) = target(self, i, g) {
                        let t = (b - self.x[self.head[i]]) / g;
                        if t <= limit && g.abs() > best_abs {
                            best_abs = g.abs();
                            step = t.max(0.0);
                            leave = Some(i);
                            leave_bound = b;
                        }
                    }
                }
            }

            let range = self.upper[q] - self.lower[q];
            if range.is_finite() && range <= step {
                // bound flip, basis unchanged
                step = range;
                leave = None;
            } else if leave.is_none() {
                if phase1 {
                    return Err(Error::Numerical("phase 1 direction without a blocking bound".into()));
                }
                return Ok(LpStatus::Unbounded);
            }

            if step <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            self.x[q] += dir * step;
            for i in 0..self.lp.m {
                let j = self.head[i];
                self.x[j] += step * rate(i);
            }
            match leave {
                None => {
                    self.status[q] = if dir > 0.0 { Status::Upper } else { Status::Lower };
                    self.x[q] = self.nonbasic_value(q);
                    self.iterations += 1;
                }
                Some(r) => {
                    let j = self.head[r];
                    let b = leave_bound;
                    self.status[j] = if b == self.lower[j] { Status::Lower } else { Status::Upper };
                    self.x[j] = b;
                    self.pivot(r, q, &alpha);
                }
            }
        }
    }

    /// Dual simplex from a dual feasible basis; falls back to the primal
    /// method when the starting basis is not dual feasible.
    pub fn solve_dual(&mut self) -> Result<LpStatus> {
        let cb = self.basic_costs(false);
        let mut d = self.reduced_costs(&cb, false);
        if self.dual_infeasible(&d) {
            return self.solve_primal();
        }
        let (n, m) = (self.lp.n, self.lp.m);
        let ptol = self.tol.primal;
        let dtol = self.tol.dual;
        let mut degenerate_run = 0usize;
        loop {
            self.check_budget()?;
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                let cb = self.basic_costs(false);
                d = self.reduced_costs(&cb, false);
            }
            let bland = degenerate_run > DEGENERATE_BUDGET;
            let mut leave: Option<(usize, f64)> = None;
            let mut worst = ptol;
            for (i, &j) in self.head.iter().enumerate() {
                let (x, l, u) = (self.x[j], self.lower[j], self.upper[j]);
                let (viol, b) = if x < l - ptol {
                    (l - x, l)
                } else if x > u + ptol {
                    (x - u, u)
                } else {
                    continue;
                };
                if bland {
                    if leave.is_none_or(|(k, _)| j < self.head[k]) {
                        leave = Some((i, b));
                    }
                } else if viol > worst {
                    worst = viol;
                    leave = Some((i, b));
                }
            }
            let Some((r, bound)) = leave else {
                // primal feasible; clean up any residual dual infeasibility
                return self.solve_primal();
            };
            let jr = self.head[r];
            let increase = self.x[jr] < bound;

            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let alpha_r = self.row_times_a(&rho);

            // candidate entering columns with their dual ratio
            let mut cands: Vec<(usize, f64, f64)> = Vec::new();
            for j in 0..n + m {
                if self.status[j] == Status::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let a = alpha_r[j];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                // x_r changes by -a * delta_j
                let up_ok = matches!(self.status[j], Status::Lower | Status::Free);
                let down_ok = matches!(self.status[j], Status::Upper | Status::Free);
                let dir = if increase == (a < 0.0) {
                    if up_ok { 1.0 } else { continue }
                } else if down_ok {
                    -1.0
                } else {
                    continue;
                };
                let dj = if dir > 0.0 { d[j].max(0.0) } else { (-d[j]).max(0.0) };
                cands.push((j, dj, dj / a.abs()));
            }
            if cands.is_empty() {
                return Ok(LpStatus::Infeasible);
            }
            let (q, ratio) = if bland {
                let min = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
                let q = cands.iter().filter(|c| c.2 == min).map(|c| c.0).min().unwrap();
                (q, min)
            } else {
                let limit = cands
                    .iter()
                    .map(|&(j, dj, _)| (dj + dtol) / alpha_r[j].abs())
                    .fold(f64::INFINITY, f64::min);
                let mut pick = (cands[0].0, cands[0].2);
                let mut best_abs = 0.0;
                for &(j, _, ratio) in &cands {
                    if ratio <= limit && alpha_r[j].abs() > best_abs {
                        best_abs = alpha_r[j].abs();
                        pick = (j, ratio);
                    }
                }
                pick
            };

            let alpha_q = self.ftran(q);
            if (alpha_q[r] - alpha_r[q]).abs() > 1e-6 * (1.0 + alpha_q[r].abs()) {
                if self.since_refactor == 0 {
                    return Err(Error::Numerical("pivot element disagrees after refactorization".into()));
                }
                self.refactor()?;
                let cb = self.basic_costs(false);
                d = self.reduced_costs(&cb, false);
                continue;
            }
            // a zero dual step leaves the objective where it was
            if ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            let delta = (self.x[jr] - bound) / alpha_q[r];
            self.x[q] += delta;
            for i in 0..m {
                let j = self.head[i];
                self.x[j] -= delta * alpha_q[i];
            }
            let theta = d[q] / alpha_r[q];
            for (j, dj) in d.iter_mut().enumerate() {
                if self.status[j] != Status::Basic && alpha_r[j] != 0.0 {
                    *dj -= theta * alpha_r[j];
                }
            }
            d[jr] = -theta;
            d[q] = 0.0;
            self.status[jr] = if bound == self.lower[jr] { Status::Lower } else { Status::Upper };
            self.x[jr] = bound;
            self.pivot(r, q, &alpha_q);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(rows: Vec<Vec<(usize, f64)>>, cost: Vec<f64>, bounds: Vec<(f64, f64)>, row_bounds: Vec<(f64, f64)>) -> SparseLp {
        let n = cost.len();
        let mut lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        let mut upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
        lower.extend(row_bounds.iter().map(|b| b.0));
        upper.extend(row_bounds.iter().map(|b| b.1));
        SparseLp::new(n, rows, cost, lower, upper)
    }

    #[test]
    fn textbook_lp() {
        // max 5a + 4b, 6a + 4b <= 24, a + 2b <= 6
        let p = lp(
            vec![vec![(0, 6.0), (1, 4.0)], vec![(0, 1.0), (1, 2.0)]],
            vec![-5.0, -4.0],
            vec![(0.0, f64::INFINITY); 2],
            vec![(f64::NEG_INFINITY, 24.0), (f64::NEG_INFINITY, 6.0)],
        );
        let mut s = Simplex::cold(&p, p.lower.clone(), p.upper.clone(), Tolerances::default());
        assert_eq!(s.solve_primal().unwrap(), LpStatus::Optimal);
        assert!((s.objective() + 21.0).abs() < 1e-9);
        assert!((s.values()[0] - 3.0).abs() < 1e-9);
        assert!((s.values()[1] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let p = lp(
            vec![vec![(0, 1.0)], vec![(0, 1.0)]],
            vec![1.0],
            vec![(f64::NEG_INFINITY, f64::INFINITY)],
            vec![(2.0, f64::INFINITY), (f64::NEG_INFINITY, 1.0)],
        );
        let mut s = Simplex::cold(&p, p.lower.clone(), p.upper.clone(), Tolerances::default());
        assert_eq!(s.solve_primal().unwrap(), LpStatus::Infeasible);

        let p = lp(
            vec![vec![(0, 1.0), (1, -1.0)]],
            vec![-1.0, 0.0],
            vec![(0.0, f64::INFINITY); 2],
            vec![(f64::NEG_INFINITY, 1.0)],
        );
        let mut s = Simplex::cold(&p, p.lower.clone(), p.upper.clone(), Tolerances::default());
        assert_eq!(s.solve_primal().unwrap(), LpStatus::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min t s.t. t - x = 0, x + y = 3, y <= 1, t free
        let p = lp(
            vec![vec![(0, 1.0), (1, -1.0)], vec![(1, 1.0), (2, 1.0)]],
            vec![1.0, 0.0, 0.0],
            vec![
                (f64::NEG_INFINITY, f64::INFINITY),
                (0.0, f64::INFINITY),
                (0.0, 1.0),
            ],
            vec![(0.0, 0.0), (3.0, 3.0)],
        );
        let mut s = Simplex::cold(&p, p.lower.clone(), p.upper.clone(), Tolerances::default());
        assert_eq!(s.solve_primal().unwrap(), LpStatus::Optimal);
        assert!((s.objective() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn dual_reoptimization_after_bound_change() {
        let p = lp(
            vec![vec![(0, 6.0), (1, 4.0)], vec![(0, 1.0), (1, 2.0)]],
            vec![-5.0, -4.0],
            vec![(0.0, f64::INFINITY); 2],
            vec![(f64::NEG_INFINITY, 24.0), (f64::NEG_INFINITY, 6.0)],
        );
        let mut s = Simplex::cold(&p, p.lower.clone(), p.upper.clone(), Tolerances::default());
        s.solve_primal().unwrap();
        let ws = s.warm_start(None);
        let mut upper = p.upper.clone();
        upper[1] = 1.0;
        let mut w = Simplex::warm(&p, p.lower.clone(), upper.clone(), &ws, Tolerances::default()).unwrap();
        assert_eq!(w.solve_dual().unwrap(), LpStatus::Optimal);
        let mut c = Simplex::cold(&p, p.lower.clone(), upper, Tolerances::default());
        c.solve_primal().unwrap();
        assert!((w.objective() - c.objective()).abs() < 1e-9);
        // a = 10/3, b = 1
        assert!((w.objective() + (50.0 / 3.0 + 4.0)).abs() < 1e-9);
    }
}
