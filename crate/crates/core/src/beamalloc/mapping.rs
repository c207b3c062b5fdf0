use beamflex_optim::{solve_qp, QpOptions, QpProblem};

use super::{check, round_carriers, AllocError, BeamPlan, Strategy};
use crate::channel::{ChannelMap, Payload};
use crate::traffic::TrafficScenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingMode {
    /// Every beam keeps `M` carriers; only the mapping is flexible.
    FixedBandwidth,
    /// Adjacent beams share `2M` carriers.
    FlexibleBandwidth,
}

/// Relaxed per-(user, beam) bandwidth shares, in carriers.
#[derive(Debug, Clone)]
pub struct MappingSolution {
    /// `(user, beam)` of each variable, grouped by user.
    pub pairs: Vec<(usize, usize)>,
    /// Spectral efficiency of each pair at uniform carrier power.
    pub efficiency: Vec<f64>,
    pub share: Vec<f64>,
    pub objective: f64,
}

impl MappingSolution {
    pub fn beam_bandwidth(&self, beams: usize) -> Vec<f64> {
        let mut w = vec![0.0; beams];
        for (&(_, b), &v) in self.pairs.iter().zip(&self.share) {
            w[b] += v;
        }
        w
    }

    /// Relaxed offered rate per user, in carrier-bandwidth units.
    pub fn user_rates(&self, users: usize) -> Vec<f64> {
        let mut r = vec![0.0; users];
        for ((&(n, _), &s), &v) in self.pairs.iter().zip(&self.efficiency).zip(&self.share) {
            r[n] += s * v;
        }
        r
    }
}

/// The mapping program: minimize `sum_n (sum_b s_nb w_nb - d_n)^2` over shares
/// of eligible pairs, with `sum_b w_nb <= 1` per user and the beam bandwidth
/// limits of `mode`.
pub fn mapping_qp(
    payload: &Payload,
    channel: &ChannelMap,
    scenario: &TrafficScenario,
    mode: MappingMode,
) -> (QpProblem, Vec<(usize, usize)>, Vec<f64>) {
    let k = payload.beams();
    let wc = payload.carrier_bandwidth();
    let p = payload.uniform_carrier_power();
    let mut pairs = Vec::new();
    let mut eff = Vec::new();
    for n in 0..channel.num_users() {
        for &b in channel.eligible(n) {
            pairs.push((n, b));
            eff.push((p * channel.gamma(n, b)).ln_1p() / std::f64::consts::LN_2);
        }
    }
    let mut qp = QpProblem::new(pairs.len());
    let mut per_beam: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    let mut i = 0;
    while i < pairs.len() {
        let n = pairs[i].0;
        let mut j = i;
        while j < pairs.len() && pairs[j].0 == n {
            qp.set_bounds(j, 0.0, 1.0);
            per_beam[pairs[j].1].push((j, 1.0));
            j += 1;
        }
        let rate: Vec<(usize, f64)> = (i..j).map(|v| (v, eff[v])).collect();
        qp.add_square(&rate, 1.0, -scenario.users[n].demand / wc);
        let ones: Vec<(usize, f64)> = (i..j).map(|v| (v, 1.0)).collect();
        qp.add_le(&ones, 1.0);
        i = j;
    }
    let m = payload.carriers as f64;
    match mode {
        MappingMode::FixedBandwidth => {
            for row in &per_beam {
                if !row.is_empty() {
                    qp.add_le(row, m);
                }
            }
        }
        MappingMode::FlexibleBandwidth => {
            for b in 0..k.saturating_sub(1) {
                let row: Vec<(usize, f64)> = per_beam[b].iter().chain(&per_beam[b + 1]).copied().collect();
                if !row.is_empty() {
                    qp.add_le(&row, 2.0 * m);
                }
            }
        }
    }
    (qp, pairs, eff)
}

pub fn solve_mapping(
    payload: &Payload,
    channel: &ChannelMap,
    scenario: &TrafficScenario,
    mode: MappingMode,
) -> Result<MappingSolution, AllocError> {
    let (qp, pairs, efficiency) = mapping_qp(payload, channel, scenario, mode);
    let sol = solve_qp(&qp, &QpOptions::default())?;
    check("mapping", &sol)?;
    let share = sol.x.iter().map(|v| v.max(0.0)).collect();
    Ok(MappingSolution { pairs, efficiency, share, objective: sol.objective })
}

/// Serving beam per user: the eligible beam with the largest share; ties go
/// to the dominant beam, then the lower index; users with no share stay on
/// their dominant beam.
pub fn extract_mapping(pairs: &[(usize, usize)], share: &[f64], channel: &ChannelMap) -> Vec<Vec<usize>> {
    let users = channel.num_users();
    let mut best: Vec<(usize, f64)> = (0..users).map(|n| (channel.dominant(n), 0.0)).collect();
    for (&(n, b), &v) in pairs.iter().zip(share) {
        if !channel.is_eligible(n, b) || !(v > 0.0) {
            continue;
        }
        let (cur, cv) = best[n];
        let tol = 1e-9 * cv.abs().max(v.abs());
        let wins = if (v - cv).abs() <= tol {
            let dom = channel.dominant(n);
            cur != dom && (b == dom || b < cur)
        } else {
            v > cv
        };
        if wins {
            best[n] = (b, v);
        }
    }
    let mut served = vec![Vec::new(); channel.beams()];
    for (n, (b, _)) in best.into_iter().enumerate() {
        served[b].push(n);
    }
    served
}

/// Flexible beam-user mapping, with either fixed or flexible bandwidth.
pub fn allocate_mapping(
    payload: &Payload,
    channel: &ChannelMap,
    scenario: &TrafficScenario,
    mode: MappingMode,
) -> Result<BeamPlan, AllocError> {
    let k = payload.beams();
    let wc = payload.carrier_bandwidth();
    let sol = solve_mapping(payload, channel, scenario, mode)?;
    let served = extract_mapping(&sol.pairs, &sol.share, channel);
    let bandwidth_hz: Vec<f64> = sol.beam_bandwidth(k).iter().map(|w| w * wc).collect();
    let (strategy, carriers) = match mode {
        MappingMode::FixedBandwidth => (Strategy::Map, vec![payload.carriers; k]),
        MappingMode::FlexibleBandwidth => {
            let rates = sol.user_rates(channel.num_users());
            let unmet: Vec<f64> = served
                .iter()
                .map(|m| m.iter().map(|&n| (scenario.users[n].demand / wc - rates[n]).max(0.0)).sum())
                .collect();
            (Strategy::BwMap, round_carriers(&bandwidth_hz, wc, payload.carriers, &unmet))
        }
    };
    Ok(BeamPlan {
        strategy,
        power_fraction: None,
        bandwidth_hz,
        carriers,
        served,
        carrier_power: vec![payload.uniform_carrier_power(); k],
    })
}
