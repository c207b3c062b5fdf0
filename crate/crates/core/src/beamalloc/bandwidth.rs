use beamflex_optim::{solve_qp, QpOptions, QpProblem};

use super::{cell_effective_snrs, check, round_carriers, AllocError, BeamPlan, Strategy};
use crate::channel::{ChannelMap, Payload};
use crate::traffic::TrafficScenario;

/// Beam-level bandwidth split with rigid mapping and a fixed power density.
///
/// Bandwidths are in carriers: beam `b` offers `W_b log2(1 + s_b / K)` against
/// `rq_b`, maximizing `sum_b (rq_b R_b - R_b^2 / 2) / n_b` subject to
/// `W_a + W_{a+1} <= 2M`.
#[derive(Debug, Clone)]
pub struct BandwidthProblem {
    /// Spectral efficiency per beam, `log2(1 + s_b / K)`.
    pub efficiency: Vec<f64>,
    pub request: Vec<f64>,
    pub users: Vec<usize>,
    pub carriers: usize,
}

impl BandwidthProblem {
    pub fn from_scenario(payload: &Payload, channel: &ChannelMap, scenario: &TrafficScenario) -> Self {
        let k = payload.beams() as f64;
        let wc = payload.carrier_bandwidth();
        Self {
            efficiency: cell_effective_snrs(payload, channel, scenario)
                .iter()
                .map(|s| (s / k).ln_1p() / std::f64::consts::LN_2)
                .collect(),
            request: scenario.demand_per_cell().iter().map(|r| r / wc).collect(),
            users: scenario.counts(),
            carriers: payload.carriers,
        }
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        (0..w.len())
            .filter(|&b| self.users[b] > 0)
            .map(|b| {
                let r = w[b] * self.efficiency[b];
                (self.request[b] * r - 0.5 * r * r) / self.users[b] as f64
            })
            .sum()
    }

    pub fn solve(&self) -> Result<Vec<f64>, AllocError> {
        let k = self.efficiency.len();
        let cap = 2.0 * self.carriers as f64;
        let mut qp = QpProblem::new(k);
        for b in 0..k {
            if self.users[b] == 0 {
                qp.set_bounds(b, 0.0, 0.0);
                continue;
            }
            let inv = 1.0 / self.users[b] as f64;
            let a = self.efficiency[b];
            qp.quadratic_mut()[(b, b)] = inv * a * a;
            qp.linear_mut()[b] = -inv * self.request[b] * a;
            qp.set_bounds(b, 0.0, cap);
        }
        for b in 0..k.saturating_sub(1) {
            qp.add_le(&[(b, 1.0), (b + 1, 1.0)], cap);
        }
        let sol = solve_qp(&qp, &QpOptions::default())?;
        check("bandwidth", &sol)?;
        Ok(sol.x.iter().map(|v| v.clamp(0.0, cap)).collect())
    }

    /// Requested rate not covered by `w`, used as the rounding priority.
    pub fn unmet(&self, w: &[f64]) -> Vec<f64> {
        (0..w.len()).map(|b| (self.request[b] - w[b] * self.efficiency[b]).max(0.0)).collect()
    }
}

/// Flexible bandwidth at uniform per-carrier power, rigid mapping.
pub fn allocate_bandwidth(payload: &Payload, channel: &ChannelMap, scenario: &TrafficScenario) -> Result<BeamPlan, AllocError> {
    let problem = BandwidthProblem::from_scenario(payload, channel, scenario);
    let w = problem.solve()?;
    let wc = payload.carrier_bandwidth();
    let bandwidth_hz: Vec<f64> = w.iter().map(|v| v * wc).collect();
    let carriers = round_carriers(&bandwidth_hz, wc, payload.carriers, &problem.unmet(&w));
    Ok(BeamPlan {
        strategy: Strategy::Bw,
        power_fraction: None,
        bandwidth_hz,
        carriers,
        served: scenario.cell_members.clone(),
        carrier_power: vec![payload.uniform_carrier_power(); payload.beams()],
    })
}
