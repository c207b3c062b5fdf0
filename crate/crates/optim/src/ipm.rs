use nalgebra::{DMatrix, DVector};

use crate::error::QpError;
use crate::problem::{kkt_residuals, QpProblem, Solution, Status};
use crate::FEASIBILITY_TOL;

#[derive(Debug, Clone)]
pub struct QpOptions {
    pub max_iter: usize,
    /// Relative tolerance on the interior-point residuals. Kept well below the
    /// KKT certification bound so mapped-back residuals stay inside it.
    pub tol: f64,
    /// Run the PSD check before solving. Branch-and-bound disables it for node
    /// relaxations after checking the root once.
    pub check_convexity: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-10, check_convexity: true }
    }
}

/// Solves a convex QP.
///
/// Returns an error only for malformed or nonconvex input; infeasibility and
/// iteration exhaustion are reported through [`Status`].
pub fn solve_qp(qp: &QpProblem, opts: &QpOptions) -> Result<Solution, QpError> {
    qp.validate()?;
    if opts.check_convexity {
        qp.check_convex()?;
    }
    Ok(solve_validated(qp, opts))
}

enum Kind {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

/// The problem restricted to non-fixed variables, with bounds turned into rows.
struct Reduced {
    free: Vec<usize>,
    q: DMatrix<f64>,
    c: Vec<f64>,
    cons: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    kinds: Vec<Kind>,
    x0: Vec<f64>,
}

fn is_fixed(lo: f64, hi: f64) -> bool {
    lo.is_finite() && hi.is_finite() && hi - lo <= 1e-12 * (1.0 + lo.abs())
}

impl Reduced {
    /// `None` when a row over fixed variables alone is violated.
    fn build(qp: &QpProblem) -> Option<Self> {
        let n = qp.num_vars();
        let (lower, upper) = (qp.lower(), qp.upper());
        let mut pos = vec![usize::MAX; n];
        let mut free = Vec::new();
        let mut fixed_val = vec![0.0; n];
        for j in 0..n {
            if is_fixed(lower[j], upper[j]) {
                fixed_val[j] = lower[j];
            } else {
                pos[j] = free.len();
                free.push(j);
            }
        }
        let nf = free.len();
        let quad = qp.quadratic();
        let mut q = DMatrix::zeros(nf, nf);
        let mut c = vec![0.0; nf];
        for (r, &i) in free.iter().enumerate() {
            c[r] = qp.linear()[i];
            for (s, &j) in free.iter().enumerate() {
                q[(r, s)] = 0.5 * (quad[(i, j)] + quad[(j, i)]);
            }
            for j in 0..n {
                if pos[j] == usize::MAX && fixed_val[j] != 0.0 {
                    c[r] += 0.5 * (quad[(i, j)] + quad[(j, i)]) * fixed_val[j];
                }
            }
        }
        let mut cons = Vec::new();
        let mut b = Vec::new();
        let mut kinds = Vec::new();
        for (k, (row, &rhs)) in qp.rows().iter().zip(qp.rhs()).enumerate() {
            if rhs == f64::INFINITY {
                continue;
            }
            let mut shifted = rhs;
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, a) in row {
                if pos[j] == usize::MAX {
                    shifted -= a * fixed_val[j];
                } else if a != 0.0 {
                    match entries.iter_mut().find(|e| e.0 == pos[j]) {
                        Some(e) => e.1 += a,
                        None => entries.push((pos[j], a)),
                    }
                }
            }
            if entries.is_empty() {
                if shifted < -FEASIBILITY_TOL * (1.0 + rhs.abs()) {
                    return None;
                }
                continue;
            }
            cons.push(entries);
            b.push(shifted);
            kinds.push(Kind::Row(k));
        }
        let mut x0 = vec![0.0; nf];
        for (r, &j) in free.iter().enumerate() {
            x0[r] = 0.0_f64.clamp(lower[j].min(upper[j]), upper[j]);
            if lower[j].is_finite() {
                cons.push(vec![(r, -1.0)]);
                b.push(-lower[j]);
                kinds.push(Kind::Lower(r));
            }
            if upper[j].is_finite() {
                cons.push(vec![(r, 1.0)]);
                b.push(upper[j]);
                kinds.push(Kind::Upper(r));
            }
        }
        Some(Self { free, q, c, cons, b, kinds, x0 })
    }
}

struct CoreResult {
    x: Vec<f64>,
    z: Vec<f64>,
    converged: bool,
    iterations: usize,
}

fn dot_sparse(row: &[(usize, f64)], v: &[f64]) -> f64 {
    row.iter().map(|&(j, a)| a * v[j]).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Cholesky of `k + delta I`, increasing `delta` from a floor relative to
/// `scale` until it factors.
fn factor(k: &DMatrix<f64>, scale: f64) -> nalgebra::Cholesky<f64, nalgebra::Dyn> {
    let n = k.nrows();
    let mut delta = 1e-13 * scale;
    loop {
        let mut reg = k.clone();
        for i in 0..n {
            reg[(i, i)] += delta;
        }
        if let Some(ch) = reg.cholesky() {
            return ch;
        }
        delta *= 100.0;
    }
}

/// Solves `k dx = rhs`, refining against the unregularized matrix while the
/// residual keeps shrinking.
fn solve_refined(
    k: &DMatrix<f64>,
    ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    rhs: &DVector<f64>,
) -> DVector<f64> {
    let mut dx = ch.solve(rhs);
    let mut resid = rhs - k * &dx;
    let mut norm = resid.amax();
    for _ in 0..5 {
        if norm == 0.0 {
            break;
        }
        let cand = &dx + ch.solve(&resid);
        let r = rhs - k * &cand;
        let rn = r.amax();
        if rn >= 0.5 * norm {
            if rn < norm {
                dx = cand;
            }
            break;
        }
        dx = cand;
        resid = r;
        norm = rn;
    }
    dx
}

fn step_to_boundary(v: &[f64], dv: &[f64]) -> f64 {
    let mut alpha: f64 = 1.0;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            alpha = alpha.min(-x / d);
        }
    }
    alpha
}

/// Residual level at which a stalled run still counts as converged.
const ACCEPTABLE_TOL: f64 = 1e-8;

/// Mehrotra predictor-corrector on `min 1/2 x'Qx + c'x  s.t.  a_i'x <= b_i`.
fn ipm_core(
    q: &DMatrix<f64>,
    c: &[f64],
    cons: &[Vec<(usize, f64)>],
    b: &[f64],
    x0: &[f64],
    opts: &QpOptions,
) -> CoreResult {
    let n = c.len();
    let m = cons.len();
    let mut x = x0.to_vec();
    let q_scale = (0..n).map(|i| q[(i, i)].abs()).fold(1.0, f64::max);
    if m == 0 {
        let k = q.clone();
        let ch = factor(&k, q_scale);
        let rhs = -DVector::from_column_slice(c);
        let sol = solve_refined(&k, &ch, &rhs);
        x = sol.iter().copied().collect();
        let r = q * DVector::from_column_slice(&x) + DVector::from_column_slice(c);
        let ok = r.amax() <= 1e-8 * (1.0 + inf_norm(c));
        return CoreResult { x, z: Vec::new(), converged: ok, iterations: 1 };
    }
    let b_norm = inf_norm(b);
    let c_norm = inf_norm(c);
    let mut s: Vec<f64> = cons
        .iter()
        .zip(b)
        .map(|(row, &bi)| (bi - dot_sparse(row, &x)).max(1.0))
        .collect();
    let mut z = vec![1.0; m];
    let mut rp = vec![0.0; m];
    let mut rc = vec![0.0; m];
    let mut ds = vec![0.0; m];
    let mut dz = vec![0.0; m];
    let mut stalls = 0;
    let mut best = (x.clone(), z.clone(), f64::INFINITY, 0);
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        let xv = DVector::from_column_slice(&x);
        let qx = q * &xv;
        let mut rd: Vec<f64> = (0..n).map(|j| qx[j] + c[j]).collect();
        let mut ax_norm: f64 = 0.0;
        let mut atz_norm: f64 = 0.0;
        for (i, row) in cons.iter().enumerate() {
            let ax = dot_sparse(row, &x);
            ax_norm = ax_norm.max(ax.abs());
            rp[i] = ax + s[i] - b[i];
            for &(j, a) in row {
                rd[j] += a * z[i];
                atz_norm = atz_norm.max((a * z[i]).abs());
            }
        }
        let mu = s.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / m as f64;
        let obj: f64 = 0.5 * xv.dot(&qx) + c.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        let primal_res = inf_norm(&rp) / (1.0 + b_norm.max(ax_norm));
        let dual_res = inf_norm(&rd) / (1.0 + c_norm.max(qx.amax()).max(atz_norm));
        let comp = s.iter().zip(&z).fold(0.0_f64, |mx, (a, b)| mx.max(a * b)) / (1.0 + obj.abs());
        let merit = primal_res.max(dual_res).max(comp);
        if merit <= opts.tol {
            return CoreResult { x, z, converged: true, iterations: iter };
        }
        if merit < best.2 {
            best = (x.clone(), z.clone(), merit, iter);
        } else if best.2 <= ACCEPTABLE_TOL && iter - best.3 >= 10 {
            break;
        }
        if inf_norm(&x) > 1e14 || inf_norm(&z) > 1e14 {
            break;
        }

        let mut k = q.clone();
        for (i, row) in cons.iter().enumerate() {
            let d = z[i] / s[i];
            for &(p, ap) in row {
                for &(r, ar) in row {
                    k[(p, r)] += d * ap * ar;
                }
            }
        }
        let ch = factor(&k, q_scale);

        let solve_dir = |rc: &[f64], ds: &mut [f64], dz: &mut [f64]| {
            let mut rhs = DVector::from_iterator(n, rd.iter().map(|v| -v));
            for (i, row) in cons.iter().enumerate() {
                let w = (rc[i] + z[i] * rp[i]) / s[i];
                for &(j, a) in row {
                    rhs[j] -= a * w;
                }
            }
            let dx = solve_refined(&k, &ch, &rhs);
            for (i, row) in cons.iter().enumerate() {
                let adx: f64 = row.iter().map(|&(j, a)| a * dx[j]).sum();
                ds[i] = -rp[i] - adx;
                dz[i] = (rc[i] - z[i] * ds[i]) / s[i];
            }
            dx
        };

        for i in 0..m {
            rc[i] = -s[i] * z[i];
        }
        let _ = solve_dir(&rc, &mut ds, &mut dz);
        let alpha_aff = step_to_boundary(&s, &ds).min(step_to_boundary(&z, &dz));
        let mu_aff = (0..m)
            .map(|i| (s[i] + alpha_aff * ds[i]) * (z[i] + alpha_aff * dz[i]))
            .sum::<f64>()
            / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        for i in 0..m {
            rc[i] = sigma * mu - s[i] * z[i] - ds[i] * dz[i];
        }
        let dx = solve_dir(&rc, &mut ds, &mut dz);
        let alpha_max = step_to_boundary(&s, &ds).min(step_to_boundary(&z, &dz));
        let alpha = (0.995 * alpha_max).min(1.0);
        if alpha < 1e-12 {
            stalls += 1;
            if stalls > 5 {
                break;
            }
        } else {
            stalls = 0;
        }
        for j in 0..n {
            x[j] += alpha * dx[j];
        }
        for i in 0..m {
            s[i] = (s[i] + alpha * ds[i]).max(1e-300);
            z[i] = (z[i] + alpha * dz[i]).max(1e-300);
        }
        iterations = iter + 1;
    }
    // Near the solution the Newton systems lose accuracy as complementarity
    // vanishes; the best iterate is kept if it is close enough.
    let (x, z, merit, _) = best;
    CoreResult { x, z, converged: merit <= ACCEPTABLE_TOL, iterations }
}

/// Active-set refinement of an interior solution: rows whose slack is below
/// their multiplier are taken as equalities and the KKT system is solved
/// exactly. On degenerate problems the interior iterate sits about
/// `sqrt(mu)` inside such rows; the polished point lands on them. Returns
/// `None` unless the refined point is feasible, dual feasible and no worse.
fn polish(
    q: &DMatrix<f64>,
    c: &[f64],
    cons: &[Vec<(usize, f64)>],
    b: &[f64],
    x: &[f64],
    z: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = c.len();
    let active: Vec<usize> = (0..cons.len()).filter(|&i| b[i] - dot_sparse(&cons[i], x) < z[i]).collect();
    let na = active.len();
    if n == 0 || n + na > 2000 {
        return None;
    }
    let mut kkt = DMatrix::zeros(n + na, n + na);
    kkt.view_mut((0, 0), (n, n)).copy_from(q);
    let mut rhs = DVector::zeros(n + na);
    for j in 0..n {
        rhs[j] = -c[j];
    }
    for (r, &i) in active.iter().enumerate() {
        for &(j, a) in &cons[i] {
            kkt[(n + r, j)] += a;
            kkt[(j, n + r)] += a;
        }
        rhs[n + r] = b[i];
    }
    let sol = kkt.clone().lu().solve(&rhs)?;
    let resid = (&kkt * &sol - &rhs).amax();
    if !(resid <= 1e-9 * (1.0 + rhs.amax())) {
        return None;
    }
    let xn: Vec<f64> = sol.iter().take(n).copied().collect();
    let lam_scale = 1.0 + sol.rows(n, na).amax();
    let mut zn = vec![0.0; cons.len()];
    for (r, &i) in active.iter().enumerate() {
        let l = sol[n + r];
        if l < -1e-9 * lam_scale {
            return None;
        }
        zn[i] = l.max(0.0);
    }
    if cons.iter().zip(b).any(|(row, &bi)| dot_sparse(row, &xn) > bi + 1e-9 * (1.0 + bi.abs())) {
        return None;
    }
    let obj = |v: &[f64]| {
        let dv = DVector::from_column_slice(v);
        0.5 * dv.dot(&(q * &dv)) + c.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    };
    let (fo, fnew) = (obj(x), obj(&xn));
    (fnew <= fo + 1e-12 * (1.0 + fo.abs())).then_some((xn, zn))
}

/// Phase-one test: is there an `x` within the bounds with every row violated
/// by at most the feasibility tolerance?
fn rows_feasible(red: &Reduced, opts: &QpOptions) -> Option<bool> {
    let nf = red.free.len();
    let row_ids: Vec<usize> = red
        .kinds
        .iter()
        .enumerate()
        .filter(|(_, k)| matches!(k, Kind::Row(_)))
        .map(|(i, _)| i)
        .collect();
    let nt = row_ids.len();
    let n = nf + nt;
    let q = DMatrix::zeros(n, n);
    let mut c = vec![0.0; n];
    let mut cons = Vec::new();
    let mut b = Vec::new();
    let mut x0 = red.x0.clone();
    for (t, &i) in row_ids.iter().enumerate() {
        c[nf + t] = 1.0;
        let mut row = red.cons[i].clone();
        row.push((nf + t, -1.0));
        let viol = (dot_sparse(&red.cons[i], &red.x0) - red.b[i]).max(0.0);
        x0.push(viol + 1.0);
        cons.push(row);
        b.push(red.b[i]);
        cons.push(vec![(nf + t, -1.0)]);
        b.push(0.0);
    }
    for (i, kind) in red.kinds.iter().enumerate() {
        if !matches!(kind, Kind::Row(_)) {
            cons.push(red.cons[i].clone());
            b.push(red.b[i]);
        }
    }
    let res = ipm_core(&q, &c, &cons, &b, &x0, opts);
    let total: f64 = res.x[nf..].iter().sum();
    let scale = 1.0 + inf_norm(&red.b);
    if res.converged {
        Some(total <= 1e-7 * scale)
    } else if total <= 1e-7 * scale {
        Some(true)
    } else {
        None
    }
}

pub(crate) fn solve_validated(qp: &QpProblem, opts: &QpOptions) -> Solution {
    let n = qp.num_vars();
    let m = qp.num_rows();
    for j in 0..n {
        if qp.lower()[j] > qp.upper()[j] + FEASIBILITY_TOL * (1.0 + qp.lower()[j].abs()) {
            return Solution::infeasible(n, m, 0);
        }
    }
    let Some(red) = Reduced::build(qp) else {
        return Solution::infeasible(n, m, 0);
    };
    let mut core = ipm_core(&red.q, &red.c, &red.cons, &red.b, &red.x0, opts);
    if core.converged {
        if let Some((x, z)) = polish(&red.q, &red.c, &red.cons, &red.b, &core.x, &core.z) {
            core.x = x;
            core.z = z;
        }
    }
    if !core.converged {
        if rows_feasible(&red, opts) == Some(false) {
            return Solution::infeasible(n, m, core.iterations);
        }
    }

    let mut x = vec![0.0; n];
    for j in 0..n {
        if is_fixed(qp.lower()[j], qp.upper()[j]) {
            x[j] = qp.lower()[j];
        }
    }
    for (r, &j) in red.free.iter().enumerate() {
        x[j] = core.x[r].clamp(qp.lower()[j], qp.upper()[j]);
    }
    let mut row_duals = vec![0.0; m];
    let mut bound_duals = vec![0.0; n];
    for (i, kind) in red.kinds.iter().enumerate() {
        let zi = core.z.get(i).copied().unwrap_or(0.0);
        match *kind {
            Kind::Row(k) => row_duals[k] = zi,
            Kind::Lower(r) => bound_duals[red.free[r]] -= zi,
            Kind::Upper(r) => bound_duals[red.free[r]] += zi,
        }
    }
    // Fixed variables absorb their reduced gradient into the bound multiplier.
    let quad = qp.quadratic();
    let mut grad: Vec<f64> = qp.linear().to_vec();
    for (k, row) in qp.rows().iter().enumerate() {
        for &(j, a) in row {
            grad[j] += a * row_duals[k];
        }
    }
    for j in 0..n {
        if is_fixed(qp.lower()[j], qp.upper()[j]) {
            let qj: f64 = (0..n).map(|i| 0.5 * (quad[(j, i)] + quad[(i, j)]) * x[i]).sum();
            bound_duals[j] = -(grad[j] + qj);
        }
    }
    let kkt = kkt_residuals(qp, &x, &row_duals, &bound_duals);
    let status = if core.converged && kkt.certifies_optimality() {
        Status::Optimal
    } else {
        Status::IterationLimit
    };
    Solution {
        objective: qp.objective(&x),
        x,
        status,
        kkt,
        row_duals,
        bound_duals,
        iterations: core.iterations,
    }
}
