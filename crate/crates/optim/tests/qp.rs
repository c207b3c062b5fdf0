use beamflex_optim::{solve_qp, QpError, QpOptions, QpProblem, Status};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts() -> QpOptions {
    QpOptions::default()
}

#[test]
fn active_lower_bound() {
    let mut qp = QpProblem::new(1);
    qp.add_square(&[(0, 1.0)], 1.0, 0.0);
    qp.add_ge(&[(0, 1.0)], 3.0);
    let sol = solve_qp(&qp, &opts()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.x[0] - 3.0).abs() < 1e-7);
    assert!((sol.objective - 9.0).abs() < 1e-6);
    assert!(sol.kkt.max() <= 1e-6);
}

#[test]
fn simple_bound_instead_of_row() {
    let mut qp = QpProblem::new(1);
    qp.add_square(&[(0, 1.0)], 1.0, 0.0);
    qp.set_bounds(0, 3.0, f64::INFINITY);
    let sol = solve_qp(&qp, &opts()).unwrap();
    assert!(sol.is_optimal());
    assert!((sol.objective - 9.0).abs() < 1e-6);
    // d/dx x^2 = 6 at the bound, balanced by the lower-bound multiplier.
    assert!((sol.bound_duals[0] + 6.0).abs() < 1e-5);
}

#[test]
fn symmetric_split() {
    let mut qp = QpProblem::new(2);
    qp.add_square(&[(0, 1.0)], 1.0, -1.0);
    qp.add_square(&[(1, 1.0)], 1.0, -1.0);
    qp.add_le(&[(0, 1.0), (1, 1.0)], 1.0);
    let sol = solve_qp(&qp, &opts()).unwrap();
    assert!(sol.is_optimal());
    assert!((sol.x[0] - 0.5).abs() < 1e-7 && (sol.x[1] - 0.5).abs() < 1e-7);
    assert!((sol.objective - 0.5).abs() < 1e-7);
}

#[test]
fn fixed_variables_are_presolved() {
    let mut qp = QpProblem::new(3);
    qp.add_square(&[(0, 1.0), (1, 1.0), (2, 1.0)], 1.0, -2.0);
    qp.set_bounds(1, 0.25, 0.25);
    qp.set_bounds(2, 1.0, 1.0);
    let sol = solve_qp(&qp, &opts()).unwrap();
    assert!(sol.is_optimal());
    assert_eq!(sol.x[1], 0.25);
    assert_eq!(sol.x[2], 1.0);
    assert!((sol.x[0] - 0.75).abs() < 1e-7);
}

#[test]
fn all_variables_fixed() {
    let mut qp = QpProblem::new(2);
    qp.add_square(&[(0, 1.0), (1, -1.0)], 1.0, 0.0);
    qp.set_bounds(0, 1.0, 1.0);
    qp.set_bounds(1, 3.0, 3.0);
    let sol = solve_qp(&qp, &opts()).unwrap();
    assert!(sol.is_optimal());
    assert!((sol.objective - 4.0).abs() < 1e-12);
}

#[test]
fn unconstrained_minimum() {
    let mut qp = QpProblem::new(2);
    qp.add_square(&[(0, 1.0), (1, 1.0)], 1.0, -3.0);
    qp.add_square(&[(0, 1.0), (1, -1.0)], 1.0, -1.0);
    let sol = solve_qp(&qp, &opts()).unwrap();
    assert!(sol.is_optimal());
    assert!((sol.x[0] - 2.0).abs() < 1e-7 && (sol.x[1] - 1.0).abs() < 1e-7);
}

#[test]
fn detects_infeasibility() {
    let mut qp = QpProblem::new(2);
    qp.add_square(&[(0, 1.0)], 1.0, 0.0);
    qp.add_le(&[(0, 1.0), (1, 1.0)], 1.0);
    qp.add_ge(&[(0, 1.0), (1, 1.0)], 2.0);
    qp.set_bounds(0, 0.0, 10.0);
    qp.set_bounds(1, 0.0, 10.0);
    let sol = solve_qp(&qp, &opts()).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
}

#[test]
fn detects_crossed_bounds_and_fixed_row_violation() {
    let mut qp = QpProblem::new(1);
    qp.set_bounds(0, 2.0, 1.0);
    assert_eq!(solve_qp(&qp, &opts()).unwrap().status, Status::Infeasible);

    let mut qp = QpProblem::new(2);
    qp.set_bounds(0, 2.0, 2.0);
    qp.add_le(&[(0, 1.0)], 1.0);
    assert_eq!(solve_qp(&qp, &opts()).unwrap().status, Status::Infeasible);
}

#[test]
fn rejects_nonconvex() {
    let mut qp = QpProblem::new(2);
    qp.quadratic_mut()[(0, 0)] = 1.0;
    qp.quadratic_mut()[(1, 1)] = -1e-3;
    assert!(matches!(solve_qp(&qp, &opts()), Err(QpError::NotConvex { .. })));
}

#[test]
fn accepts_tiny_negative_rounding() {
    let mut qp = QpProblem::new(2);
    qp.quadratic_mut()[(0, 0)] = 1.0;
    qp.quadratic_mut()[(1, 1)] = -1e-10;
    qp.set_bounds(1, 0.0, 1.0);
    assert!(solve_qp(&qp, &opts()).is_ok());
}

#[test]
fn rejects_bad_indices_and_nan() {
    let mut qp = QpProblem::new(2);
    qp.add_le(&[(5, 1.0)], 1.0);
    assert!(matches!(solve_qp(&qp, &opts()), Err(QpError::IndexOutOfRange { .. })));
    let mut qp = QpProblem::new(2);
    qp.linear_mut()[0] = f64::NAN;
    assert!(matches!(solve_qp(&qp, &opts()), Err(QpError::NonFinite { .. })));
}

#[test]
fn degenerate_semidefinite_objective() {
    // Flat along x0 = x1; the row pins the optimum set to a segment.
    let mut qp = QpProblem::new(2);
    qp.add_square(&[(0, 1.0), (1, -1.0)], 1.0, 0.0);
    qp.add_square(&[(0, 1.0), (1, 1.0)], 0.0, 0.0);
    qp.linear_mut()[0] = -1.0;
    qp.linear_mut()[1] = -1.0;
    qp.add_le(&[(0, 1.0), (1, 1.0)], 2.0);
    let sol = solve_qp(&qp, &opts()).unwrap();
    assert!(sol.is_optimal());
    assert!((sol.objective + 2.0).abs() < 1e-7);
}

/// Random well-conditioned PSD matrix `A'A / n + 0.1 I`.
fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut q = a.transpose() * &a / n as f64;
    for i in 0..n {
        q[(i, i)] += 0.1;
    }
    q
}

/// Euclidean projection onto `{x : lo <= x <= hi, sum x <= cap}`.
fn project(v: &[f64], lo: f64, hi: f64, cap: Option<f64>) -> Vec<f64> {
    let clip = |t: f64| v.iter().map(|&x| (x - t).clamp(lo, hi)).collect::<Vec<_>>();
    let base = clip(0.0);
    let Some(cap) = cap else { return base };
    if base.iter().sum::<f64>() <= cap {
        return base;
    }
    let (mut a, mut b) = (0.0, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if clip(mid).iter().sum::<f64>() > cap {
            a = mid;
        } else {
            b = mid;
        }
    }
    clip(b)
}

/// Projected gradient descent with fixed step `1/L`, run to stationarity.
fn projected_gradient(q: &DMatrix<f64>, c: &[f64], lo: f64, hi: f64, cap: Option<f64>) -> Vec<f64> {
    let n = c.len();
    let l = q.clone().symmetric_eigen().eigenvalues.max();
    let mut x = project(&vec![0.0; n], lo, hi, cap);
    for _ in 0..200_000 {
        let g: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| q[(i, j)] * x[j]).sum::<f64>() + c[i])
            .collect();
        let y: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - gi / l).collect();
        let nx = project(&y, lo, hi, cap);
        let step = nx.iter().zip(&x).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        x = nx;
        if step < 1e-14 {
            break;
        }
    }
    x
}

fn quad_value(q: &DMatrix<f64>, c: &[f64], x: &[f64]) -> f64 {
    let n = c.len();
    let mut v = 0.0;
    for i in 0..n {
        v += c[i] * x[i];
        for j in 0..n {
            v += 0.5 * x[i] * q[(i, j)] * x[j];
        }
    }
    v
}

#[test]
fn matches_projected_gradient_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let n = 20;
    for trial in 0..100 {
        let q = random_psd(&mut rng, n);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cap = if trial % 2 == 0 { None } else { Some(rng.random_range(0.5..3.0)) };
        let (lo, hi) = (0.0, 1.0);

        let mut qp = QpProblem::new(n);
        *qp.quadratic_mut() = q.clone();
        qp.linear_mut().copy_from_slice(&c);
        for j in 0..n {
            qp.set_bounds(j, lo, hi);
        }
        if let Some(cap) = cap {
            let row: Vec<(usize, f64)> = (0..n).map(|j| (j, 1.0)).collect();
            qp.add_le(&row, cap);
        }
        let sol = solve_qp(&qp, &opts()).unwrap();
        assert!(sol.is_optimal(), "trial {trial}: {:?} {:?}", sol.status, sol.kkt);

        let xo = projected_gradient(&q, &c, lo, hi, cap);
        let fo = quad_value(&q, &c, &xo);
        let rel = (sol.objective - fo).abs() / fo.abs().max(1.0);
        assert!(rel <= 1e-6, "trial {trial}: ipm {} oracle {fo}", sol.objective);
    }
}

#[test]
fn perturbation_does_not_improve_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 8;
    for _ in 0..20 {
        let q = random_psd(&mut rng, n);
        let mut qp = QpProblem::new(n);
        *qp.quadratic_mut() = q;
        for j in 0..n {
            qp.linear_mut()[j] = rng.random_range(-2.0..2.0);
            qp.set_bounds(j, 0.0, 1.0);
        }
        let row: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.random_range(0.1..1.0))).collect();
        qp.add_le(&row, 1.0);
        let sol = solve_qp(&qp, &opts()).unwrap();
        assert!(sol.is_optimal());
        for j in 0..n {
            for delta in [-1e-4, 1e-4] {
                let mut x = sol.x.clone();
                x[j] += delta;
                if qp.max_violation(&x) > 0.0 {
                    continue;
                }
                assert!(qp.objective(&x) >= sol.objective - 1e-6);
            }
        }
    }
}

#[test]
fn optimal_status_certifies_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let n = rng.random_range(2..15);
        let q = random_psd(&mut rng, n);
        let mut qp = QpProblem::new(n);
        *qp.quadratic_mut() = q;
        for j in 0..n {
            qp.linear_mut()[j] = rng.random_range(-5.0..5.0);
            qp.set_bounds(j, -1.0, 2.0);
        }
        for _ in 0..3 {
            let row: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.random_range(-1.0..1.0))).collect();
            qp.add_le(&row, rng.random_range(0.0..1.0));
        }
        let sol = solve_qp(&qp, &opts()).unwrap();
        if sol.is_optimal() {
            assert!(sol.kkt.max() <= 1e-6);
            assert!(qp.max_violation(&sol.x) <= 1e-8);
        }
    }
}
