//! Dense bounded-variable primal simplex.
//!
//! Rows are turned into equalities with slack columns; a phase I over
//! artificial columns finds a feasible basis, then phase II optimizes the
//! real cost. The basis inverse is kept explicitly, updated by elementary
//! row operations and rebuilt from scratch every [`REFACTOR_EVERY`] pivots.
//! Pricing and the ratio test both follow Bland's smallest-index rule.

use thiserror::Error;

const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const SINGULAR_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-7;
pub const REFACTOR_EVERY: usize = 50;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("inconsistent problem dimensions: {0}")]
    Dimension(String),
    #[error("variable {0} has lower bound above upper bound")]
    InvalidBounds(usize),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

/// `minimize cost·x` subject to `rows[i]·x (sense) rhs[i]` and
/// `lower ≤ x ≤ upper`. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// Problem with the given costs and every variable in `[0, ∞)`.
    pub fn new(cost: Vec<f64>) -> Self {
        let n = cost.len();
        LpProblem {
            cost,
            rows: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: RowSense, rhs: f64) -> &mut Self {
        self.rows.push(coeffs);
        self.senses.push(sense);
        self.rhs.push(rhs);
        self
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Dimension("bound vectors".into()));
        }
        if self.senses.len() != self.rows.len() || self.rhs.len() != self.rows.len() {
            return Err(LpError::Dimension("row metadata".into()));
        }
        if let Some(i) = self.rows.iter().position(|r| r.len() != n) {
            return Err(LpError::Dimension(format!("row {i} has wrong length")));
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] || self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(LpError::InvalidBounds(j));
            }
        }
        Ok(())
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for (i, row) in self.rows.iter().enumerate() {
            let lhs: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            let v = match self.senses[i] {
                RowSense::Le => lhs - self.rhs[i],
                RowSense::Ge => self.rhs[i] - lhs,
                RowSense::Eq => (lhs - self.rhs[i]).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values; meaningful when optimal.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals: the objective's rate of change in each right-hand side.
    pub duals: Vec<f64>,
    /// `duals·rhs + Σ reduced cost · bound` over nonbasic columns.
    pub dual_objective: f64,
    pub pivots: usize,
}

impl LpSolution {
    fn status_only(status: LpStatus, n: usize, m: usize, pivots: usize) -> Self {
        LpSolution {
            status,
            x: vec![f64::NAN; n],
            objective: match status {
                LpStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            duals: vec![f64::NAN; m],
            dual_objective: f64::NAN,
            pivots,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Column {
    Structural(usize),
    Unit { row: usize, sign: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Free nonbasic variable parked at zero.
    Zero,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

struct Simplex<'a> {
    p: &'a LpProblem,
    m: usize,
    columns: Vec<Column>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    /// Column basic in each row position.
    basis: Vec<usize>,
    /// Row-major basis inverse.
    binv: Vec<f64>,
    since_refactor: usize,
    pivots: usize,
    first_artificial: usize,
}

impl<'a> Simplex<'a> {
    fn new(p: &'a LpProblem) -> Self {
        let n = p.num_vars();
        let m = p.num_rows();
        let mut columns: Vec<Column> = (0..n).map(Column::Structural).collect();
        let mut lower = p.lower.clone();
        let mut upper = p.upper.clone();
        let mut slack_of_row = vec![None; m];
        for (i, sense) in p.senses.iter().enumerate() {
            let sign = match sense {
                RowSense::Le => 1.0,
                RowSense::Ge => -1.0,
                RowSense::Eq => continue,
            };
            slack_of_row[i] = Some(columns.len());
            columns.push(Column::Unit { row: i, sign });
            lower.push(0.0);
            upper.push(f64::INFINITY);
        }

        let mut x = vec![0.0; columns.len()];
        let mut state = vec![VarState::AtLower; columns.len()];
        for j in 0..n {
            (x[j], state[j]) = if p.lower[j].is_finite() {
                (p.lower[j], VarState::AtLower)
            } else if p.upper[j].is_finite() {
                (p.upper[j], VarState::AtUpper)
            } else {
                (0.0, VarState::Zero)
            };
        }
        let residual: Vec<f64> = (0..m)
            .map(|i| p.rhs[i] - p.rows[i].iter().zip(&x[..n]).map(|(a, v)| a * v).sum::<f64>())
            .collect();

        let first_artificial = columns.len();
        let mut basis = vec![0; m];
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            let sign = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
            let art = columns.len();
            columns.push(Column::Unit { row: i, sign });
            lower.push(0.0);
            upper.push(f64::INFINITY);
            // A slack that is already feasible starts basic instead.
            let slack_ok = slack_of_row[i].filter(|&s| match columns[s] {
                Column::Unit { sign: ss, .. } => ss * residual[i] >= 0.0,
                _ => false,
            });
            let (basic, bsign) = match slack_ok {
                Some(s) => {
                    x.push(0.0);
                    state.push(VarState::AtLower);
                    (
                        s,
                        match columns[s] {
                            Column::Unit { sign, .. } => sign,
                            _ => unreachable!(),
                        },
                    )
                }
                None => {
                    x.push(0.0);
                    state.push(VarState::AtLower);
                    (art, sign)
                }
            };
            x[basic] = residual[i].abs();
            state[basic] = VarState::Basic;
            basis[i] = basic;
            binv[i * m + i] = bsign;
        }

        Simplex {
            p,
            m,
            columns,
            lower,
            upper,
            x,
            state,
            basis,
            binv,
            since_refactor: 0,
            pivots: 0,
            first_artificial,
        }
    }

    fn column_dot(&self, y: &[f64], j: usize) -> f64 {
        match self.columns[j] {
            Column::Structural(s) => self.p.rows.iter().zip(y).map(|(r, yi)| r[s] * yi).sum(),
            Column::Unit { row, sign } => sign * y[row],
        }
    }

    /// `B⁻¹ a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        match self.columns[j] {
            Column::Structural(s) => (0..m)
                .map(|k| {
                    let row = &self.binv[k * m..(k + 1) * m];
                    row.iter().zip(&self.p.rows).map(|(b, r)| b * r[s]).sum()
                })
                .collect(),
            Column::Unit { row, sign } => (0..m).map(|k| sign * self.binv[k * m + row]).collect(),
        }
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for k in 0..m {
            let cb = cost[self.basis[k]];
            if cb != 0.0 {
                for (yi, b) in y.iter_mut().zip(&self.binv[k * m..(k + 1) * m]) {
                    *yi += cb * b;
                }
            }
        }
        y
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        // Gauss-Jordan on [B | I] with partial pivoting.
        let mut a = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            match self.columns[j] {
                Column::Structural(s) => {
                    for i in 0..m {
                        a[i * m + k] = self.p.rows[i][s];
                    }
                }
                Column::Unit { row, sign } => a[row * m + k] = sign,
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let piv_row = (c..m)
                .max_by(|&r1, &r2| a[r1 * m + c].abs().total_cmp(&a[r2 * m + c].abs()))
                .unwrap();
            let piv = a[piv_row * m + c];
            if piv.abs() < SINGULAR_TOL {
                return Err(LpError::NumericalBreakdown(format!(
                    "singular basis at refactorization (pivot {piv:e})"
                )));
            }
            if piv_row != c {
                for col in 0..m {
                    a.swap(piv_row * m + col, c * m + col);
                    inv.swap(piv_row * m + col, c * m + col);
                }
            }
            for col in 0..m {
                a[c * m + col] /= piv;
                inv[c * m + col] /= piv;
            }
            for r in 0..m {
                let f = a[r * m + c];
                if r != c && f != 0.0 {
                    for col in 0..m {
                        a[r * m + col] -= f * a[c * m + col];
                        inv[r * m + col] -= f * inv[c * m + col];
                    }
                }
            }
        }
        // inv now maps row space to basis positions.
        self.binv = inv;
        self.since_refactor = 0;
        self.recompute_basic_values();
        Ok(())
    }

    fn recompute_basic_values(&mut self) {
        let m = self.m;
        let mut r = self.p.rhs.clone();
        for j in 0..self.columns.len() {
            if self.state[j] == VarState::Basic || self.x[j] == 0.0 {
                continue;
            }
            match self.columns[j] {
                Column::Structural(s) => {
                    for (ri, row) in r.iter_mut().zip(&self.p.rows) {
                        *ri -= row[s] * self.x[j];
                    }
                }
                Column::Unit { row, sign } => r[row] -= sign * self.x[j],
            }
        }
        for k in 0..m {
            let v: f64 = self.binv[k * m..(k + 1) * m].iter().zip(&r).map(|(b, ri)| b * ri).sum();
            self.x[self.basis[k]] = v;
        }
    }

    fn run(&mut self, cost: &[f64], allow_unbounded: bool) -> Result<PhaseOutcome, LpError> {
        let m = self.m;
        loop {
            if self.pivots >= MAX_PIVOTS {
                return Err(LpError::NumericalBreakdown("pivot limit reached".into()));
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let y = self.duals(cost);

            let mut entering = None;
            for j in 0..self.columns.len() {
                let st = self.state[j];
                if st == VarState::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let d = cost[j] - self.column_dot(&y, j);
                let dir = match st {
                    VarState::AtLower if d < -OPT_TOL => 1.0,
                    VarState::AtUpper if d > OPT_TOL => -1.0,
                    VarState::Zero if d.abs() > OPT_TOL => -d.signum(),
                    _ => continue,
                };
                entering = Some((j, dir));
                break;
            }
            let Some((j, dir)) = entering else {
                return Ok(PhaseOutcome::Optimal);
            };

            let alpha = self.ftran(j);
            let mut step = self.upper[j] - self.lower[j];
            let mut leave: Option<(usize, bool)> = None;
            for k in 0..m {
                let delta = -dir * alpha[k];
                if delta.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[k];
                let (limit, to_upper) = if delta < 0.0 {
                    ((self.x[b] - self.lower[b]) / -delta, false)
                } else {
                    ((self.upper[b] - self.x[b]) / delta, true)
                };
                if !limit.is_finite() {
                    continue;
                }
                let limit = limit.max(0.0);
                let better = match leave {
                    None => limit < step,
                    Some((r, _)) => limit < step - 1e-12 || (limit <= step + 1e-12 && b < self.basis[r]),
                };
                if better {
                    step = step.min(limit);
                    leave = Some((k, to_upper));
                }
            }
            if !step.is_finite() {
                if allow_unbounded {
                    return Ok(PhaseOutcome::Unbounded);
                }
                return Err(LpError::NumericalBreakdown("unbounded phase I".into()));
            }

            self.x[j] += dir * step;
            for k in 0..m {
                let b = self.basis[k];
                self.x[b] -= dir * step * alpha[k];
            }
            self.pivots += 1;

            match leave {
                None => {
                    // bound flip
                    self.state[j] = if dir > 0.0 {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    self.x[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
                }
                Some((r, to_upper)) => {
                    let piv = alpha[r];
                    let out = self.basis[r];
                    self.state[out] = if to_upper { VarState::AtUpper } else { VarState::AtLower };
                    self.x[out] = if to_upper { self.upper[out] } else { self.lower[out] };
                    self.state[j] = VarState::Basic;
                    self.basis[r] = j;
                    let (head, rest) = self.binv.split_at_mut(r * m);
                    let (prow, tail) = rest.split_at_mut(m);
                    for v in prow.iter_mut() {
                        *v /= piv;
                    }
                    for (k, row) in head.chunks_mut(m).chain(tail.chunks_mut(m)).enumerate() {
                        let kk = if k < r { k } else { k + 1 };
                        let f = alpha[kk];
                        if f != 0.0 {
                            for (v, pv) in row.iter_mut().zip(prow.iter()) {
                                *v -= f * pv;
                            }
                        }
                    }
                    self.since_refactor += 1;
                }
            }
        }
    }
}

pub fn solve_lp(p: &LpProblem) -> Result<LpSolution, LpError> {
    p.check()?;
    let n = p.num_vars();
    let m = p.num_rows();
    let mut s = Simplex::new(p);
    let total = s.columns.len();

    let phase1: Vec<f64> = (0..total)
        .map(|j| if j >= s.first_artificial { 1.0 } else { 0.0 })
        .collect();
    s.run(&phase1, false)?;
    s.refactor()?;
    let infeasibility: f64 = (s.first_artificial..total).map(|j| s.x[j].max(0.0)).sum();
    let scale = 1.0 + p.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if infeasibility > FEAS_TOL * scale {
        return Ok(LpSolution::status_only(LpStatus::Infeasible, n, m, s.pivots));
    }
    for j in s.first_artificial..total {
        s.upper[j] = 0.0;
        if s.state[j] != VarState::Basic {
            s.x[j] = 0.0;
            s.state[j] = VarState::AtLower;
        }
    }

    let mut phase2 = vec![0.0; total];
    phase2[..n].copy_from_slice(&p.cost);
    let mut retried = false;
    loop {
        if let PhaseOutcome::Unbounded = s.run(&phase2, true)? {
            return Ok(LpSolution::status_only(LpStatus::Unbounded, n, m, s.pivots));
        }
        s.refactor()?;
        let x: Vec<f64> = s.x[..n].to_vec();
        let objective: f64 = p.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        let duals = s.duals(&phase2);
        let mut dual_objective: f64 = duals.iter().zip(&p.rhs).map(|(y, b)| y * b).sum();
        let mut dual_infeas: f64 = 0.0;
        for j in 0..total {
            if s.state[j] == VarState::Basic {
                continue;
            }
            let d = phase2[j] - s.column_dot(&duals, j);
            dual_objective += d * s.x[j];
            if s.lower[j] < s.upper[j] {
                dual_infeas = dual_infeas.max(match s.state[j] {
                    VarState::AtLower => -d,
                    VarState::AtUpper => d,
                    _ => d.abs(),
                });
            }
        }
        let primal_infeas = p.max_violation(&x);
        let gap = (objective - dual_objective).abs() / objective.abs().max(1.0);
        if primal_infeas <= FEAS_TOL * scale && dual_infeas <= FEAS_TOL && gap <= 1e-6 {
            return Ok(LpSolution {
                status: LpStatus::Optimal,
                x,
                objective,
                duals,
                dual_objective,
                pivots: s.pivots,
            });
        }
        if retried {
            return Err(LpError::NumericalBreakdown(format!(
                "optimality certificate failed (primal {primal_infeas:e}, dual {dual_infeas:e}, gap {gap:e})"
            )));
        }
        retried = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bounded_variable() {
        let mut p = LpProblem::new(vec![1.0]);
        p.set_bounds(0, 0.0, 10.0).add_row(vec![1.0], RowSense::Ge, 3.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-12);
        assert!((s.objective - 3.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_ray() {
        let mut p = LpProblem::new(vec![-1.0]);
        p.add_row(vec![1.0], RowSense::Ge, 0.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn symmetric_pair() {
        let mut p = LpProblem::new(vec![1.0, 1.0]);
        p.set_bounds(0, 0.0, 1.0)
            .set_bounds(1, 0.0, 1.0)
            .add_row(vec![1.0, 1.0], RowSense::Ge, 1.0)
            .add_row(vec![1.0, -1.0], RowSense::Eq, 0.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 0.5).abs() < 1e-12 && (s.x[1] - 0.5).abs() < 1e-12);
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_rows() {
        let mut p = LpProblem::new(vec![1.0, 1.0]);
        p.set_bounds(0, 0.0, 1.0)
            .set_bounds(1, 0.0, 1.0)
            .add_row(vec![1.0, 1.0], RowSense::Ge, 3.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn free_variables_and_upper_bounds() {
        // min x - y, y ≤ 2, x free, x ≥ y - 5
        let mut p = LpProblem::new(vec![1.0, -1.0]);
        p.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY)
            .set_bounds(1, f64::NEG_INFINITY, 2.0)
            .add_row(vec![1.0, -1.0], RowSense::Ge, -5.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 5.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities() {
        let mut p = LpProblem::new(vec![1.0, 2.0, 3.0]);
        p.add_row(vec![1.0, 1.0, 1.0], RowSense::Eq, 4.0)
            .add_row(vec![2.0, 2.0, 2.0], RowSense::Eq, 8.0)
            .add_row(vec![0.0, 1.0, 1.0], RowSense::Ge, 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 5.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_errors() {
        let mut p = LpProblem::new(vec![1.0, 1.0]);
        p.add_row(vec![1.0], RowSense::Le, 1.0);
        assert!(matches!(solve_lp(&p), Err(LpError::Dimension(_))));
        let mut p = LpProblem::new(vec![1.0]);
        p.set_bounds(0, 2.0, 1.0);
        assert_eq!(solve_lp(&p), Err(LpError::InvalidBounds(0)));
    }
}
