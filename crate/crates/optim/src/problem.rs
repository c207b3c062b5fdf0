use nalgebra::DMatrix;

use crate::error::QpError;
use crate::{FEASIBILITY_TOL, KKT_TOL};

/// A convex quadratic program `min 1/2 x'Qx + c'x + offset` subject to sparse
/// linear inequality rows `a'x <= b` and simple bounds.
///
/// Only the symmetric part of `Q` is used.
#[derive(Debug, Clone)]
pub struct QpProblem {
    n: usize,
    quad: DMatrix<f64>,
    linear: Vec<f64>,
    offset: f64,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl QpProblem {
    /// An empty problem over `n` free variables with zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            quad: DMatrix::zeros(n, n),
            linear: vec![0.0; n],
            offset: 0.0,
            rows: Vec::new(),
            rhs: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn quadratic(&self) -> &DMatrix<f64> {
        &self.quad
    }

    /// Direct access to `Q`. Callers are responsible for keeping it PSD.
    pub fn quadratic_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.quad
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn linear_mut(&mut self) -> &mut [f64] {
        &mut self.linear
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn set_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    /// Adds `weight * (a'x + shift)^2` to the objective.
    pub fn add_square(&mut self, coeffs: &[(usize, f64)], weight: f64, shift: f64) {
        for &(i, ai) in coeffs {
            for &(j, aj) in coeffs {
                self.quad[(i, j)] += 2.0 * weight * ai * aj;
            }
            self.linear[i] += 2.0 * weight * shift * ai;
        }
        self.offset += weight * shift * shift;
    }

    /// Adds the row `a'x <= rhs`.
    pub fn add_le(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        self.rows.push(coeffs.to_vec());
        self.rhs.push(rhs);
    }

    /// Adds the row `a'x >= rhs`.
    pub fn add_ge(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        self.rows
            .push(coeffs.iter().map(|&(j, a)| (j, -a)).collect());
        self.rhs.push(-rhs);
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub(crate) fn bounds_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.lower, &mut self.upper)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut v = self.offset;
        for i in 0..self.n {
            if x[i] == 0.0 {
                continue;
            }
            let mut qi = 0.0;
            for j in 0..self.n {
                qi += 0.5 * (self.quad[(i, j)] + self.quad[(j, i)]) * x[j];
            }
            v += x[i] * (0.5 * qi + self.linear[i]);
        }
        v
    }

    /// Largest violation of any row or bound at `x` (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, &b) in self.rows.iter().zip(&self.rhs) {
            let ax: f64 = row.iter().map(|&(j, a)| a * x[j]).sum();
            worst = worst.max(ax - b);
        }
        for j in 0..self.n {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }

    pub(crate) fn validate(&self) -> Result<(), QpError> {
        if self.quad.nrows() != self.n || self.quad.ncols() != self.n {
            return Err(QpError::IndexOutOfRange { index: self.quad.nrows(), n: self.n });
        }
        if self.quad.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite { what: "quadratic term" });
        }
        if self.linear.iter().any(|v| !v.is_finite()) || !self.offset.is_finite() {
            return Err(QpError::NonFinite { what: "linear term" });
        }
        for row in &self.rows {
            for &(j, a) in row {
                if j >= self.n {
                    return Err(QpError::IndexOutOfRange { index: j, n: self.n });
                }
                if !a.is_finite() {
                    return Err(QpError::NonFinite { what: "constraint row" });
                }
            }
        }
        if self.rhs.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(QpError::NonFinite { what: "constraint right-hand side" });
        }
        if self.lower.iter().chain(&self.upper).any(|v| v.is_nan()) {
            return Err(QpError::NonFinite { what: "bounds" });
        }
        Ok(())
    }

    /// Rejects a quadratic term whose symmetric part has an eigenvalue below
    /// `-1e-8 * max(1, max |Q_ii|)`. The test is a Cholesky factorization of
    /// `Q_sym + eps I`, which succeeds exactly when `lambda_min > -eps`.
    pub fn check_convex(&self) -> Result<(), QpError> {
        if self.n == 0 {
            return Ok(());
        }
        let scale = (0..self.n).map(|i| self.quad[(i, i)].abs()).fold(1.0, f64::max);
        let floor = 1e-8 * scale;
        let mut sym = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                sym[(i, j)] = 0.5 * (self.quad[(i, j)] + self.quad[(j, i)]);
            }
            sym[(i, i)] += floor;
        }
        match sym.cholesky() {
            Some(_) => Ok(()),
            None => Err(QpError::NotConvex { floor: -floor }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    IterationLimit,
    TimeLimit,
}

/// Scaled first-order optimality residuals of a primal-dual pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }

    pub fn certifies_optimality(&self) -> bool {
        self.stationarity <= KKT_TOL
            && self.dual <= KKT_TOL
            && self.complementarity <= KKT_TOL
            && self.primal <= FEASIBILITY_TOL
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: Status,
    pub kkt: KktResiduals,
    /// Multipliers of the inequality rows (nonnegative).
    pub row_duals: Vec<f64>,
    /// Net bound multipliers `mu_upper - mu_lower` per variable.
    pub bound_duals: Vec<f64>,
    pub iterations: usize,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub(crate) fn infeasible(n: usize, m: usize, iterations: usize) -> Self {
        Self {
            x: vec![f64::NAN; n],
            objective: f64::INFINITY,
            status: Status::Infeasible,
            kkt: KktResiduals::default(),
            row_duals: vec![0.0; m],
            bound_duals: vec![0.0; n],
            iterations,
        }
    }
}

/// Scaled KKT residuals of `(x, row_duals, bound_duals)` for `qp`.
///
/// Bound multipliers are split by sign: a positive net multiplier is charged
/// to the upper bound and a negative one to the lower bound.
pub(crate) fn kkt_residuals(
    qp: &QpProblem,
    x: &[f64],
    row_duals: &[f64],
    bound_duals: &[f64],
) -> KktResiduals {
    let n = qp.n;
    let mut grad = qp.linear.clone();
    let mut qx_norm: f64 = 0.0;
    for i in 0..n {
        let mut qi = 0.0;
        for j in 0..n {
            qi += 0.5 * (qp.quad[(i, j)] + qp.quad[(j, i)]) * x[j];
        }
        qx_norm = qx_norm.max(qi.abs());
        grad[i] += qi;
    }
    let c_norm = qp.linear.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut primal: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let h_norm = qp
        .rhs
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    for (k, (row, &b)) in qp.rows.iter().zip(&qp.rhs).enumerate() {
        let lam = row_duals[k];
        let ax: f64 = row.iter().map(|&(j, a)| a * x[j]).sum();
        for &(j, a) in row {
            grad[j] += a * lam;
        }
        primal = primal.max((ax - b) / (1.0 + h_norm));
        dual = dual.max(-lam);
        if b.is_finite() {
            comp = comp.max((lam * (b - ax)).abs());
        }
    }
    for j in 0..n {
        let mu = bound_duals[j];
        grad[j] += mu;
        let lo = qp.lower[j];
        let hi = qp.upper[j];
        if lo.is_finite() {
            primal = primal.max((lo - x[j]) / (1.0 + lo.abs()));
        }
        if hi.is_finite() {
            primal = primal.max((x[j] - hi) / (1.0 + hi.abs()));
        }
        if mu > 0.0 {
            if hi.is_finite() {
                comp = comp.max((mu * (hi - x[j])).abs());
            } else {
                dual = dual.max(mu);
            }
        } else if mu < 0.0 {
            if lo.is_finite() {
                comp = comp.max((mu * (x[j] - lo)).abs());
            } else {
                dual = dual.max(-mu);
            }
        }
    }
    let stat = grad.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let obj = qp.objective(x);
    KktResiduals {
        stationarity: stat / (1.0 + c_norm + qx_norm),
        primal: primal.max(0.0),
        dual: dual.max(0.0),
        complementarity: comp / (1.0 + obj.abs()),
    }
}
