use beamflex_optim::{solve_qp, QpOptions, QpProblem};
use std::f64::consts::LN_2;

use super::{cell_effective_snrs, check, AllocError, BeamPlan, Strategy};
use crate::channel::{ChannelMap, Payload};
use crate::traffic::TrafficScenario;

/// Beam-level power split with rigid mapping and half the band per beam.
///
/// Rates are in units of the carrier bandwidth: beam `b` offers
/// `M log2(1 + x_b s_b)` against a request `rq_b`, and the program maximizes
/// `sum_b (rq_b R_b - R_b^2 / 2) / n_b`.
#[derive(Debug, Clone)]
pub struct PowerProblem {
    pub snr: Vec<f64>,
    pub request: Vec<f64>,
    pub users: Vec<usize>,
    pub carriers: usize,
    /// `P_max / P_total`.
    pub pair_cap: f64,
}

impl PowerProblem {
    pub fn from_scenario(payload: &Payload, channel: &ChannelMap, scenario: &TrafficScenario) -> Self {
        let wc = payload.carrier_bandwidth();
        Self {
            snr: cell_effective_snrs(payload, channel, scenario),
            request: scenario.demand_per_cell().iter().map(|r| r / wc).collect(),
            users: scenario.counts(),
            carriers: payload.carriers,
            pair_cap: payload.hpa_max_power_w / payload.total_power_w,
        }
    }

    /// Largest useful fraction per beam: the point where the offered rate
    /// meets the request (and never above 1).
    pub fn upper_limits(&self) -> Vec<f64> {
        (0..self.snr.len())
            .map(|b| {
                if self.users[b] == 0 || self.snr[b] <= 0.0 {
                    0.0
                } else {
                    let se = self.request[b] / self.carriers as f64;
                    ((se.exp2() - 1.0) / self.snr[b]).min(1.0)
                }
            })
            .collect()
    }

    fn rate(&self, b: usize, x: f64) -> (f64, f64, f64) {
        let m = self.carriers as f64;
        let s = self.snr[b];
        let r = m * (x * s).ln_1p() / LN_2;
        let d1 = m * s / ((1.0 + x * s) * LN_2);
        let d2 = -m * s * s / ((1.0 + x * s).powi(2) * LN_2);
        (r, d1, d2)
    }

    /// Value, gradient and (diagonal) Hessian of the objective.
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let k = x.len();
        let (mut f, mut g, mut h) = (0.0, vec![0.0; k], vec![0.0; k]);
        for b in 0..k {
            if self.users[b] == 0 {
                continue;
            }
            let w = 1.0 / self.users[b] as f64;
            let (r, d1, d2) = self.rate(b, x[b]);
            let rq = self.request[b];
            f += w * (rq * r - 0.5 * r * r);
            g[b] = w * (rq - r) * d1;
            h[b] = w * (-d1 * d1 + (rq - r) * d2);
        }
        (f, g, h)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.eval(x).0
    }

    /// Sequential QP with exact (diagonal, negative) curvature and
    /// backtracking on the true objective.
    pub fn solve(&self) -> Result<Vec<f64>, AllocError> {
        let k = self.snr.len();
        let xmax = self.upper_limits();
        let start = (1.0 / k as f64).min(self.pair_cap / 2.0);
        let mut x: Vec<f64> = xmax.iter().map(|&u| u.min(start)).collect();
        let opts = QpOptions::default();
        for _ in 0..200 {
            let (f, g, h) = self.eval(&x);
            let mut qp = QpProblem::new(k);
            for b in 0..k {
                qp.quadratic_mut()[(b, b)] = (-h[b]).max(1e-12);
                qp.linear_mut()[b] = h[b] * x[b] - g[b];
                qp.set_bounds(b, 0.0, xmax[b]);
            }
            let all: Vec<(usize, f64)> = (0..k).map(|b| (b, 1.0)).collect();
            qp.add_le(&all, 1.0);
            for j in 0..k / 2 {
                qp.add_le(&[(2 * j, 1.0), (2 * j + 1, 1.0)], self.pair_cap);
            }
            let sol = solve_qp(&qp, &opts)?;
            check("power", &sol)?;
            let d: Vec<f64> = (0..k).map(|b| sol.x[b] - x[b]).collect();
            let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            if d.iter().fold(0.0_f64, |m, v| m.max(v.abs())) < 1e-12 || slope <= 1e-15 * (1.0 + f.abs()) {
                break;
            }
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = (0..k).map(|b| (x[b] + t * d[b]).clamp(0.0, xmax[b])).collect();
                if self.objective(&trial) >= f + 1e-4 * t * slope || t < 1e-10 {
                    x = trial;
                    break;
                }
                t *= 0.5;
            }
        }
        Ok(x)
    }
}

/// Flexible power, fixed half-band bandwidth and rigid mapping. All carriers
/// of an amplifier pair share its power equally.
pub fn allocate_power(payload: &Payload, channel: &ChannelMap, scenario: &TrafficScenario) -> Result<BeamPlan, AllocError> {
    let problem = PowerProblem::from_scenario(payload, channel, scenario);
    let x = problem.solve()?;
    let k = payload.beams();
    let m = payload.carriers;
    let carrier_power = (0..k)
        .map(|b| {
            let a = b & !1;
            (x[a] + x[a + 1]) * payload.total_power_w / (2 * m) as f64
        })
        .collect();
    Ok(BeamPlan {
        strategy: Strategy::Pow,
        power_fraction: Some(x),
        bandwidth_hz: vec![payload.total_bandwidth_hz / 2.0; k],
        carriers: vec![m; k],
        served: scenario.cell_members.clone(),
        carrier_power,
    })
}
