//! Dense dual active-set solver for small strictly convex QPs.
//!
//! ```text
//!     minimize     ½ x'Hx + q'x
//!     subject to   A_eq x  = b_eq
//!                  A_in x >= b_in
//! ```
//!
//! The method follows Goldfarb and Idnani: start from the unconstrained
//! minimum, add equalities, then repeatedly pick the most violated inequality
//! and move along the dual step until it becomes active, dropping blocking
//! constraints on the way. Problems here have at most a handful of variables,
//! so the reduced system `N'H⁻¹N` is rebuilt and factored at every step
//! instead of being updated.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{GaitError, Result};

const SYMMETRY_TOL: f64 = 1e-12;
/// Normalized violation below which an inequality counts as satisfied.
const VIOLATION_TOL: f64 = 1e-12;
const DEPENDENCE_TOL: f64 = 1e-12;
/// Scaled violation above which a claimed optimum is rejected.
const FINAL_FEAS_TOL: f64 = 1e-8;
/// Tolerances used to accept a warm-start active set.
const WARM_FEAS_TOL: f64 = 1e-10;
const WARM_DUAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    /// Rows of `A_in x >= b_in`.
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

impl QpProblem {
    pub fn unconstrained(h: DMatrix<f64>, q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            h,
            q,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
        }
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.q.dot(x)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.q.len();
        let mismatch = |msg: String| Err(GaitError::DimensionMismatch(msg));
        if self.h.nrows() != n || self.h.ncols() != n {
            return mismatch(format!("H is {}x{}, expected {n}x{n}", self.h.nrows(), self.h.ncols()));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return mismatch("equality block".into());
        }
        if self.a_in.ncols() != n || self.a_in.nrows() != self.b_in.len() {
            return mismatch("inequality block".into());
        }
        let all = self
            .h
            .iter()
            .chain(self.q.iter())
            .chain(self.a_eq.iter())
            .chain(self.b_eq.iter())
            .chain(self.a_in.iter())
            .chain(self.b_in.iter());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(GaitError::InvalidInput("QP data is not finite".into()));
        }
        let scale = self.h.amax().max(1.0);
        if (&self.h - self.h.transpose()).amax() > SYMMETRY_TOL * scale {
            return Err(GaitError::InvalidInput("H is not symmetric".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Active inequality rows, ascending.
    pub active_set: Vec<usize>,
    pub status: QpStatus,
    pub eq_multipliers: DVector<f64>,
    /// One multiplier per inequality row; zero for inactive rows.
    pub in_multipliers: DVector<f64>,
    /// For `Infeasible`: the inequality (or equality, offset by the inequality
    /// count) that could not be brought to feasibility.
    pub blocking_constraint: Option<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_eq: f64,
    /// Largest inequality violation (non-negative).
    pub primal_in: f64,
    pub complementarity: f64,
    /// Most negative inequality multiplier (non-positive).
    pub dual: f64,
}

impl KktResiduals {
    /// The acceptance thresholds used throughout the crate.
    pub fn certified(&self) -> bool {
        self.stationarity < 1e-8
            && self.primal_eq < 1e-9
            && self.primal_in < 1e-9
            && self.complementarity < 1e-8
            && self.dual >= -1e-10
    }
}

/// KKT residuals of `sol` for `p`, using `Hx + q = A_eq'λ + A_in'μ`.
pub fn kkt_residuals(p: &QpProblem, sol: &QpSolution) -> KktResiduals {
    let x = &sol.x;
    let grad = &p.h * x + &p.q - p.a_eq.transpose() * &sol.eq_multipliers - p.a_in.transpose() * &sol.in_multipliers;
    let eq = &p.a_eq * x - &p.b_eq;
    let slack = &p.a_in * x - &p.b_in;
    let primal_in = slack.iter().fold(0.0f64, |m, s| m.max(-s));
    let complementarity = slack
        .iter()
        .zip(sol.in_multipliers.iter())
        .fold(0.0f64, |m, (s, mu)| m.max((s * mu).abs()));
    let dual = sol.in_multipliers.iter().fold(0.0f64, |m, mu| m.min(*mu));
    KktResiduals {
        stationarity: grad.amax(),
        primal_eq: if eq.is_empty() { 0.0 } else { eq.amax() },
        primal_in,
        complementarity,
        dual,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Row {
    Eq(usize),
    In(usize),
}

struct Workspace<'a> {
    p: &'a QpProblem,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> Workspace<'a> {
    fn new(p: &'a QpProblem) -> Result<Self> {
        p.validate()?;
        let chol = Cholesky::new(p.h.clone())
            .ok_or_else(|| GaitError::SolverFailure("H is not positive definite".into()))?;
        Ok(Self { p, chol })
    }

    fn normal(&self, row: Row) -> DVector<f64> {
        match row {
            Row::Eq(i) => self.p.a_eq.row(i).transpose(),
            Row::In(i) => self.p.a_in.row(i).transpose(),
        }
    }

    fn rhs(&self, row: Row) -> f64 {
        match row {
            Row::Eq(i) => self.p.b_eq[i],
            Row::In(i) => self.p.b_in[i],
        }
    }

    fn normals(&self, active: &[Row]) -> DMatrix<f64> {
        let n = self.p.n();
        let mut nm = DMatrix::zeros(n, active.len());
        for (c, row) in active.iter().enumerate() {
            nm.set_column(c, &self.normal(*row));
        }
        nm
    }

    /// Primal step `z = H⁻¹(I - N N*) n⁺` and dual step `r = N* n⁺`.
    fn directions(&self, active: &[Row], np: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let hinv_np = self.chol.solve(np);
        if active.is_empty() {
            return Ok((hinv_np, DVector::zeros(0)));
        }
        let nm = self.normals(active);
        let b = self.chol.solve(&nm);
        let m = nm.transpose() * &b;
        let mchol = Cholesky::new(m)
            .ok_or_else(|| GaitError::SolverFailure("active constraints became dependent".into()))?;
        let r = mchol.solve(&(b.transpose() * np));
        let z = hinv_np - b * &r;
        Ok((z, r))
    }

    /// Solve the equality-constrained problem with `active` rows held tight.
    fn equality_qp(&self, active: &[Row]) -> Option<(DVector<f64>, DVector<f64>)> {
        let hinv_q = self.chol.solve(&self.p.q);
        if active.is_empty() {
            return Some((-hinv_q, DVector::zeros(0)));
        }
        let nm = self.normals(active);
        let b = self.chol.solve(&nm);
        let m = nm.transpose() * &b;
        let mchol = Cholesky::new(m)?;
        let rhs = DVector::from_iterator(active.len(), active.iter().map(|r| self.rhs(*r))) + nm.transpose() * &hinv_q;
        let lambda = mchol.solve(&rhs);
        let x = self.chol.solve(&(&nm * &lambda - &self.p.q));
        Some((x, lambda))
    }

    fn finish(&self, active: &[Row], status: QpStatus, x: DVector<f64>, blocking: Option<usize>, iterations: usize) -> QpSolution {
        let p = self.p;
        let (mut x, mut eq_mult, mut in_mult) = (x, DVector::zeros(p.a_eq.nrows()), DVector::zeros(p.a_in.nrows()));
        let mut status = status;
        if status == QpStatus::Optimal && self.violation(&x) > FINAL_FEAS_TOL {
            status = QpStatus::Infeasible;
        }
        if status == QpStatus::Optimal {
            // Polish primal and dual values on the final active set.
            if let Some((xp, lambda)) = self.equality_qp(active).filter(|(xp, _)| self.violation(xp) <= FINAL_FEAS_TOL) {
                x = xp;
                for (row, l) in active.iter().zip(lambda.iter()) {
                    match row {
                        Row::Eq(i) => eq_mult[*i] = *l,
                        Row::In(i) => in_mult[*i] = *l,
                    }
                }
            }
        }
        let mut active_set: Vec<usize> = active
            .iter()
            .filter_map(|r| match r {
                Row::In(i) => Some(*i),
                Row::Eq(_) => None,
            })
            .collect();
        active_set.sort_unstable();
        QpSolution {
            objective: p.objective(&x),
            x,
            active_set,
            status,
            eq_multipliers: eq_mult,
            in_multipliers: in_mult,
            blocking_constraint: blocking,
            iterations,
        }
    }

    /// Largest row-normalized constraint violation at `x`.
    fn violation(&self, x: &DVector<f64>) -> f64 {
        let p = self.p;
        let eq = (0..p.a_eq.nrows()).map(|i| {
            let row = p.a_eq.row(i);
            (row.transpose().dot(x) - p.b_eq[i]).abs() / (row.norm().max(f64::MIN_POSITIVE) * (1.0 + p.b_eq[i].abs()))
        });
        let ineq = (0..p.a_in.nrows()).map(|i| {
            let row = p.a_in.row(i);
            (p.b_in[i] - row.transpose().dot(x)).max(0.0) / (row.norm().max(f64::MIN_POSITIVE) * (1.0 + p.b_in[i].abs()))
        });
        eq.chain(ineq).fold(0.0, f64::max)
    }

    fn try_warm(&self, warm: &[usize]) -> Option<QpSolution> {
        let p = self.p;
        if warm.iter().any(|&i| i >= p.a_in.nrows()) {
            return None;
        }
        let mut active: Vec<Row> = (0..p.a_eq.nrows()).map(Row::Eq).collect();
        active.extend(warm.iter().map(|&i| Row::In(i)));
        let (x, lambda) = self.equality_qp(&active)?;
        let me = p.a_eq.nrows();
        if lambda.iter().skip(me).any(|l| *l < -WARM_DUAL_TOL) {
            return None;
        }
        let slack = &p.a_in * &x - &p.b_in;
        if slack.iter().any(|s| *s < -WARM_FEAS_TOL) {
            return None;
        }
        if (&p.a_eq * &x - &p.b_eq).iter().any(|e| e.abs() > WARM_FEAS_TOL) {
            return None;
        }
        Some(self.finish(&active, QpStatus::Optimal, x, None, 0))
    }

    fn solve_cold(&self) -> Result<QpSolution> {
        let p = self.p;
        let n = p.n();
        let mi = p.a_in.nrows();
        let max_iter = 10 * (n + mi);
        let mut x = -self.chol.solve(&p.q);
        let mut active: Vec<Row> = Vec::new();
        let mut u: Vec<f64> = Vec::new();
        let mut iterations = 0;

        for i in 0..p.a_eq.nrows() {
            let np = self.normal(Row::Eq(i));
            let s = np.dot(&x) - self.rhs(Row::Eq(i));
            let (z, r) = self.directions(&active, &np)?;
            let curvature = z.dot(&np);
            if active.len() >= n || curvature <= DEPENDENCE_TOL * np.dot(&self.chol.solve(&np)).max(f64::MIN_POSITIVE) {
                if s.abs() > 1e-9 * (1.0 + self.rhs(Row::Eq(i)).abs()) {
                    return Ok(self.finish(&active, QpStatus::Infeasible, x, Some(mi + i), iterations));
                }
                continue;
            }
            let t = -s / curvature;
            x += t * &z;
            for (uj, rj) in u.iter_mut().zip(r.iter()) {
                *uj -= t * rj;
            }
            active.push(Row::Eq(i));
            u.push(t);
        }

        loop {
            // Most violated inequality by normalized slack; ties go to the lowest index.
            let mut chosen: Option<(usize, f64)> = None;
            for i in 0..mi {
                if active.contains(&Row::In(i)) {
                    continue;
                }
                let row = p.a_in.row(i);
                let norm = row.norm().max(f64::MIN_POSITIVE);
                let s = (row.transpose().dot(&x) - p.b_in[i]) / norm;
                if s < -VIOLATION_TOL && chosen.is_none_or(|(_, best)| s < best) {
                    chosen = Some((i, s));
                }
            }
            let Some((pi, _)) = chosen else {
                return Ok(self.finish(&active, QpStatus::Optimal, x, None, iterations));
            };
            let np = self.normal(Row::In(pi));
            let mut up = 0.0;

            loop {
                iterations += 1;
                if iterations > max_iter {
                    return Ok(self.finish(&active, QpStatus::MaxIterations, x, None, iterations));
                }
                let (z, r) = self.directions(&active, &np)?;
                let mut t1 = f64::INFINITY;
                let mut drop: Option<usize> = None;
                for (j, row) in active.iter().enumerate() {
                    if let Row::In(_) = row {
                        if r[j] > 0.0 {
                            let ratio = u[j] / r[j];
                            if ratio < t1 {
                                t1 = ratio;
                                drop = Some(j);
                            }
                        }
                    }
                }
                let curvature = z.dot(&np);
                let degenerate = active.len() >= n
                    || curvature <= DEPENDENCE_TOL * np.dot(&self.chol.solve(&np)).max(f64::MIN_POSITIVE);
                let s = np.dot(&x) - p.b_in[pi];
                let t2 = if degenerate { f64::INFINITY } else { -s / curvature };
                let t = t1.min(t2);
                if !t.is_finite() {
                    return Ok(self.finish(&active, QpStatus::Infeasible, x, Some(pi), iterations));
                }
                if !degenerate {
                    x += t * &z;
                }
                for (uj, rj) in u.iter_mut().zip(r.iter()) {
                    *uj -= t * rj;
                }
                up += t;
                if t2 <= t1 {
                    active.push(Row::In(pi));
                    u.push(up);
                    break;
                }
                let j = drop.expect("finite partial step has a blocking constraint");
                active.remove(j);
                u.remove(j);
            }
        }
    }
}

/// Solve `p` from scratch.
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution> {
    Workspace::new(p)?.solve_cold()
}

/// A solver that remembers the last optimal active set and tries it first.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    warm: Option<Vec<usize>>,
}

impl QpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    pub fn warm_active_set(&self) -> Option<&[usize]> {
        self.warm.as_deref()
    }

    pub fn solve(&mut self, p: &QpProblem) -> Result<QpSolution> {
        let ws = Workspace::new(p)?;
        let sol = match self.warm.as_deref().and_then(|w| ws.try_warm(w)) {
            Some(sol) => sol,
            None => ws.solve_cold()?,
        };
        self.warm = (sol.status == QpStatus::Optimal).then(|| sol.active_set.clone());
        Ok(sol)
    }
}
