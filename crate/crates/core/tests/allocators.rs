use beamflex::beamalloc::{
    effective_snr, extract_mapping, mapping_qp, round_carriers, solve_mapping, BandwidthProblem, MappingMode,
    PowerProblem,
};
use beamflex::channel::{build_channel, BeamLayout, Payload};
use beamflex::traffic::{TrafficScenario, User};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WC: f64 = 62.5e6;

#[test]
fn geometric_mean_examples() {
    assert_eq!(effective_snr(&[7.0]), Some(7.0));
    assert!((effective_snr(&[3.0, 3.0]).unwrap() - 3.0).abs() < 1e-12);
    assert!((effective_snr(&[10.0, 1000.0]).unwrap() - 100.0).abs() < 1e-9);
    assert_eq!(effective_snr(&[]), None);
}

fn power_problem(snr: Vec<f64>, request: Vec<f64>, users: Vec<usize>, pair_cap: f64) -> PowerProblem {
    PowerProblem { snr, request, users, carriers: 4, pair_cap }
}

#[test]
fn symmetric_power_split_is_uniform() {
    let p = power_problem(vec![100.0; 6], vec![18.0; 6], vec![40; 6], 133.0 / 200.0);
    let x = p.solve().unwrap();
    for v in x {
        assert!((v - 1.0 / 6.0).abs() < 1e-6, "{v}");
    }
}

/// Best objective over a grid of step `h` on the feasible power region.
fn power_grid(p: &PowerProblem, h: f64) -> f64 {
    let xmax = p.upper_limits();
    let steps = |u: f64| (u / h).floor() as usize;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=steps(xmax[0]) {
        let x0 = i as f64 * h;
        for j in 0..=steps(xmax[1]) {
            let x1 = j as f64 * h;
            if x0 + x1 <= 1.0 + 1e-12 && x0 + x1 <= p.pair_cap + 1e-12 {
                best = best.max(p.objective(&[x0, x1]));
            }
        }
    }
    best
}

#[test]
fn two_beam_power_matches_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases = [
        power_problem(vec![150.0, 100.0], vec![22.0, 6.0], vec![40, 10], 1.0),
        power_problem(vec![200.0, 200.0], vec![30.0, 30.0], vec![50, 50], 0.7),
    ];
    let random = (0..4).map(|_| {
        power_problem(
            vec![rng.random_range(30.0..300.0), rng.random_range(30.0..300.0)],
            vec![rng.random_range(2.0..30.0), rng.random_range(2.0..30.0)],
            vec![rng.random_range(1..80), rng.random_range(1..80)],
            rng.random_range(0.5..1.0),
        )
    });
    for p in cases.into_iter().chain(random) {
        let x = p.solve().unwrap();
        let xmax = p.upper_limits();
        assert!(x[0] + x[1] <= p.pair_cap.min(1.0) + 1e-7);
        assert!(x.iter().zip(&xmax).all(|(v, u)| *v >= -1e-9 && *v <= u + 1e-9));
        let got = p.objective(&x);
        let grid = power_grid(&p, 1e-3);
        assert!(got >= grid - 1e-9 * grid.abs().max(1.0), "solver {got} below grid {grid}");
        assert!(got - grid <= 1e-3 * grid.abs().max(1.0), "solver {got} vs grid {grid}");
    }
}

#[test]
fn power_objective_is_invariant_under_pair_relabeling() {
    let p = power_problem(vec![80.0, 120.0, 80.0, 120.0], vec![10.0, 20.0, 10.0, 20.0], vec![20, 30, 20, 30], 0.6);
    let x = [0.2, 0.3, 0.15, 0.25];
    let swapped = [0.15, 0.25, 0.2, 0.3];
    assert!((p.objective(&x) - p.objective(&swapped)).abs() < 1e-12);
}

/// Concavity of the per-beam power surrogate where offered rate
/// stays below the request.
#[test]
fn power_surrogate_is_concave_below_demand() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let snr = 10f64.powf(rng.random_range(0.5..3.0));
        let request = rng.random_range(0.5..40.0);
        let p = power_problem(vec![snr], vec![request], vec![rng.random_range(1..100)], 1.0);
        let xmax = p.upper_limits()[0];
        let n = 1000;
        let f: Vec<f64> = (0..=n).map(|i| p.objective(&[xmax * i as f64 / n as f64])).collect();
        let scale = f.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
        for w in f.windows(3) {
            let d2 = w[0] - 2.0 * w[1] + w[2];
            assert!(d2 <= 1e-12 * scale, "second difference {d2} for snr {snr}, request {request}");
        }
    }
}

#[test]
fn symmetric_bandwidth_is_half_band() {
    let p = BandwidthProblem { efficiency: vec![4.5; 6], request: vec![18.0; 6], users: vec![45; 6], carriers: 4 };
    for w in p.solve().unwrap() {
        assert!((w - 4.0).abs() < 1e-6, "{w}");
    }
}

fn bandwidth_grid(p: &BandwidthProblem, h: f64) -> f64 {
    let cap = 2.0 * p.carriers as f64;
    let n = (cap / h).round() as usize;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=n {
        for j in 0..=(n - i) {
            best = best.max(p.objective(&[i as f64 * h, j as f64 * h]));
        }
    }
    best
}

#[test]
fn two_beam_bandwidth_matches_grid() {
    // All demand in the second beam: it takes the whole band.
    let hot = BandwidthProblem { efficiency: vec![4.0, 4.0], request: vec![0.0, 40.0], users: vec![0, 20], carriers: 4 };
    let w = hot.solve().unwrap();
    assert!(w[0].abs() < 1e-6 && (w[1] - 8.0).abs() < 1e-6, "{w:?}");
    // Demand below the band: stops where offered meets requested.
    let met = BandwidthProblem { efficiency: vec![4.0, 4.0], request: vec![0.0, 20.0], users: vec![0, 20], carriers: 4 };
    assert!((met.solve().unwrap()[1] - 5.0).abs() < 1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..5 {
        let p = BandwidthProblem {
            efficiency: vec![rng.random_range(2.0..6.0), rng.random_range(2.0..6.0)],
            request: vec![rng.random_range(1.0..40.0), rng.random_range(1.0..40.0)],
            users: vec![rng.random_range(1..80), rng.random_range(1..80)],
            carriers: 4,
        };
        let w = p.solve().unwrap();
        assert!(w[0] + w[1] <= 8.0 + 1e-7);
        let got = p.objective(&w);
        let grid = bandwidth_grid(&p, 1e-3);
        assert!(got >= grid - 1e-9 * grid.abs().max(1.0));
        assert!(got - grid <= 1e-3 * grid.abs().max(1.0));
    }
}

/// Two beams with one carrier each; user 1 sits where both beams may serve
/// it.
fn two_beam_toy() -> (Payload, TrafficScenario) {
    let mut payload = Payload {
        layout: BeamLayout::new(2, 1.0).unwrap(),
        carriers: 1,
        total_bandwidth_hz: 2.0 * WC,
        total_power_w: 200.0 / 12.0 * 2.0,
        ..Payload::reference()
    };
    payload.budget = payload.budget.clone().calibrated(15.0, payload.uniform_carrier_power(), WC);
    let users = vec![
        User { pos: [0.1, 0.0], demand: 250e6, cell: 0 },
        User { pos: [0.75, 0.0], demand: 150e6, cell: 0 },
        User { pos: [2.0, 0.1], demand: 50e6, cell: 1 },
    ];
    (payload, TrafficScenario { users, cell_members: vec![vec![0, 1], vec![2]] })
}

/// Minimizes a QP objective over a box-plus-rows region by successively
/// zoomed grids.
fn zoom_grid(qp: &beamflex_optim::QpProblem) -> f64 {
    let n = qp.num_vars();
    let feasible = |x: &[f64]| {
        qp.rows().iter().zip(qp.rhs()).all(|(row, &b)| row.iter().map(|&(j, a)| a * x[j]).sum::<f64>() <= b + 1e-12)
            && x.iter().enumerate().all(|(j, v)| *v >= qp.lower()[j] - 1e-12 && *v <= qp.upper()[j] + 1e-12)
    };
    let mut lo: Vec<f64> = qp.lower().to_vec();
    let mut hi: Vec<f64> = qp.upper().to_vec();
    let div = 20usize;
    let mut best = (f64::INFINITY, vec![0.0; n]);
    for _ in 0..8 {
        let step: Vec<f64> = (0..n).map(|j| (hi[j] - lo[j]) / div as f64).collect();
        let total = (div + 1).pow(n as u32);
        let mut x = vec![0.0; n];
        for idx in 0..total {
            let mut r = idx;
            for j in 0..n {
                x[j] = lo[j] + (r % (div + 1)) as f64 * step[j];
                r /= div + 1;
            }
            if feasible(&x) {
                let f = qp.objective(&x);
                if f < best.0 {
                    best = (f, x.clone());
                }
            }
        }
        for j in 0..n {
            lo[j] = (best.1[j] - 2.0 * step[j]).max(qp.lower()[j]);
            hi[j] = (best.1[j] + 2.0 * step[j]).min(qp.upper()[j]);
        }
    }
    best.0
}

#[test]
fn mapping_toy_matches_grid() {
    let (payload, sc) = two_beam_toy();
    let ch = build_channel(&payload, &sc.positions()).unwrap();
    assert_eq!(ch.eligible(0), &[0]);
    assert_eq!(ch.eligible(1), &[0, 1]);
    assert_eq!(ch.eligible(2), &[1]);
    for mode in [MappingMode::FixedBandwidth, MappingMode::FlexibleBandwidth] {
        let (qp, pairs, _) = mapping_qp(&payload, &ch, &sc, mode);
        assert_eq!(pairs, vec![(0, 0), (1, 0), (1, 1), (2, 1)]);
        let sol = solve_mapping(&payload, &ch, &sc, mode).unwrap();
        let oracle = zoom_grid(&qp);
        assert!(
            (sol.objective - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
            "{mode:?}: solver {} oracle {oracle}",
            sol.objective
        );
        assert!(sol.objective <= oracle + 1e-9);
    }
    // With the first beam saturated by user 0, user 1 leans on beam 1.
    let sol = solve_mapping(&payload, &ch, &sc, MappingMode::FixedBandwidth).unwrap();
    assert!(sol.share[2] > sol.share[1], "{:?}", sol.share);
    let served = extract_mapping(&sol.pairs, &sol.share, &ch);
    assert_eq!(served, vec![vec![0], vec![1, 2]]);
}

#[test]
fn extraction_rules() {
    let (payload, sc) = two_beam_toy();
    let ch = build_channel(&payload, &sc.positions()).unwrap();
    let pairs = vec![(0, 0), (1, 0), (1, 1), (2, 1)];
    let served = |share: [f64; 4]| extract_mapping(&pairs, &share, &ch);
    assert_eq!(served([1.0, 0.3, 0.7, 1.0]), vec![vec![0], vec![1, 2]]);
    assert_eq!(served([1.0, 0.0, 0.0, 1.0]), vec![vec![0, 1], vec![2]]);
    // Ties go to the dominant beam.
    assert_eq!(served([1.0, 0.5, 0.5, 1.0]), vec![vec![0, 1], vec![2]]);
}

/// `(deviation, -priority-weighted carriers, -carriers)` of a rounding.
fn rounding_cost(m: &[usize], w: &[f64], prio: &[f64]) -> (f64, f64, f64) {
    let dev: f64 = m.iter().zip(w).map(|(&c, &wb)| (c as f64 * WC - wb).abs()).sum();
    let pr: f64 = m.iter().zip(prio).map(|(&c, p)| c as f64 * p).sum();
    (dev / WC, -pr, -(m.iter().sum::<usize>() as f64))
}

fn enumerate_rounding(w: &[f64], m: usize, prio: &[f64]) -> (f64, f64, f64) {
    let k = w.len();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for mask in 0..(1u32 << k) {
        let c: Vec<usize> = (0..k)
            .map(|b| {
                let u = w[b] / WC;
                if mask >> b & 1 == 1 { u.ceil() as usize } else { u.floor() as usize }
            })
            .collect();
        if c.windows(2).any(|p| p[0] + p[1] > 2 * m) {
            continue;
        }
        let cost = rounding_cost(&c, w, prio);
        let better = cost.0 < best.0 - 1e-9
            || ((cost.0 - best.0).abs() <= 1e-9 && (cost.1 < best.1 - 1e-9 || ((cost.1 - best.1).abs() <= 1e-9 && cost.2 < best.2)));
        if better {
            best = cost;
        }
    }
    best
}

#[test]
fn rounding_matches_enumeration() {
    let w: Vec<f64> = [300.0, 200.0, 300.0, 200.0, 300.0, 200.0].iter().map(|v| v * 1e6).collect();
    let m = round_carriers(&w, WC, 4, &[0.0; 6]);
    let got = rounding_cost(&m, &w, &[0.0; 6]);
    let want = enumerate_rounding(&w, 4, &[0.0; 6]);
    assert!((got.0 - want.0).abs() < 1e-9 && got.2 == want.2, "{m:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..500 {
        // Random feasible continuous bandwidths along the row.
        let mut w = vec![0.0_f64; 6];
        for b in 0..6 {
            let room = 8.0 - if b > 0 { w[b - 1] } else { 0.0 };
            w[b] = rng.random_range(0.0..=room);
            if rng.random_bool(0.2) {
                w[b] = w[b].round();
            }
        }
        let w: Vec<f64> = w.iter().map(|u| u * WC).collect();
        let prio: Vec<f64> = (0..6).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..10.0) }).collect();
        let m = round_carriers(&w, WC, 4, &prio);
        assert!(m.windows(2).all(|p| p[0] + p[1] <= 8), "{m:?}");
        let got = rounding_cost(&m, &w, &prio);
        let want = enumerate_rounding(&w, 4, &prio);
        assert!((got.0 - want.0).abs() < 1e-6, "deviation {got:?} vs {want:?}");
        assert!((got.1 - want.1).abs() < 1e-6 * (1.0 + want.1.abs()), "priority {got:?} vs {want:?}");
    }
}
