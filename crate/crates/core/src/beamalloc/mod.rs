//! Step one: beam-level allocation of power, bandwidth and beam-user mapping.

mod bandwidth;
mod mapping;
mod power;
mod rounding;

pub use bandwidth::{allocate_bandwidth, BandwidthProblem};
pub use mapping::{allocate_mapping, extract_mapping, mapping_qp, solve_mapping, MappingMode, MappingSolution};
pub use power::{allocate_power, PowerProblem};
pub use rounding::round_carriers;

use beamflex_optim::{QpError, Status};
use thiserror::Error;

use crate::channel::{ChannelMap, Payload};
use crate::traffic::TrafficScenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Pow,
    Bw,
    Map,
    BwMap,
    BwPow,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Pow, Strategy::Bw, Strategy::Map, Strategy::BwMap, Strategy::BwPow];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Pow => "POW",
            Strategy::Bw => "BW",
            Strategy::Map => "MAP",
            Strategy::BwMap => "BW-MAP",
            Strategy::BwPow => "BW-POW",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.label().eq_ignore_ascii_case(s.trim()))
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error)]
pub enum AllocError {
    #[error(transparent)]
    Solver(#[from] QpError),
    #[error("{what} solver stopped with status {status:?} (KKT residual {kkt:.2e})")]
    NotSolved { what: &'static str, status: Status, kkt: f64 },
}

/// Result of step one: resources per beam and who each beam serves.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPlan {
    pub strategy: Strategy,
    /// Fractions of total power (POW only).
    pub power_fraction: Option<Vec<f64>>,
    /// Continuous bandwidth per beam before rounding, Hz.
    pub bandwidth_hz: Vec<f64>,
    pub carriers: Vec<usize>,
    pub served: Vec<Vec<usize>>,
    /// Power of each carrier of the beam, W.
    pub carrier_power: Vec<f64>,
}

impl BeamPlan {
    /// Beam serving each user.
    pub fn serving_beam(&self, users: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; users];
        for (b, members) in self.served.iter().enumerate() {
            for &n in members {
                out[n] = b;
            }
        }
        out
    }
}

/// Geometric mean of linear SNRs; `None` for an empty set.
pub fn effective_snr(snrs: &[f64]) -> Option<f64> {
    match snrs {
        [] => return None,
        [s] => return Some(*s),
        _ => {}
    }
    Some((snrs.iter().map(|s| s.ln()).sum::<f64>() / snrs.len() as f64).exp())
}

/// Effective SNR of beam `b` toward `members` when the full payload power
/// occupies `bandwidth_hz`.
pub fn beam_effective_snr(
    payload: &Payload,
    channel: &ChannelMap,
    b: usize,
    members: &[usize],
    bandwidth_hz: f64,
) -> Option<f64> {
    let scale = payload.total_power_w * payload.carrier_bandwidth() / bandwidth_hz;
    let snrs: Vec<f64> = members.iter().map(|&n| scale * channel.gamma(n, b)).collect();
    effective_snr(&snrs)
}

/// Effective SNR of every cell toward its own members at the half-band
/// convention; 0 for empty cells.
pub(crate) fn cell_effective_snrs(payload: &Payload, channel: &ChannelMap, scenario: &TrafficScenario) -> Vec<f64> {
    let half = payload.total_bandwidth_hz / 2.0;
    scenario
        .cell_members
        .iter()
        .enumerate()
        .map(|(b, m)| beam_effective_snr(payload, channel, b, m, half).unwrap_or(0.0))
        .collect()
}

pub(crate) fn check(what: &'static str, sol: &beamflex_optim::Solution) -> Result<(), AllocError> {
    if sol.is_optimal() {
        Ok(())
    } else {
        Err(AllocError::NotSolved { what, status: sol.status, kkt: sol.kkt.max() })
    }
}
