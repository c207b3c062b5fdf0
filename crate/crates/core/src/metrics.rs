//! Evaluation metrics: normalized quadratic unmet capacity (NQU), normalized
//! unmet capacity (NU), offered rate and minimum user rate.

use rand::Rng;
use std::collections::BTreeMap;

use crate::beamalloc::Strategy;
use crate::channel::{adjacent_gain_floor, bessel_gain, eligible_adjacent, Payload};

/// Everything observed for one strategy on one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub strategy: Strategy,
    pub realization: usize,
    pub seed: u64,
    pub requested: Vec<f64>,
    pub offered: Vec<f64>,
    pub beam_requested: Vec<f64>,
    pub beam_offered: Vec<f64>,
    /// Relative scheduling gap per beam.
    pub gaps: Vec<f64>,
}

impl RunReport {
    pub fn total_offered(&self) -> f64 {
        self.offered.iter().sum()
    }

    pub fn min_rate(&self) -> f64 {
        self.offered.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }
}

/// `sum_n (R_req - R_off)^2 / (N * reference^2)` for a per-user reference
/// rate.
pub fn nqu(requested: &[f64], offered: &[f64], reference: f64) -> f64 {
    let n = requested.len() as f64;
    let sq: f64 = requested.iter().zip(offered).map(|(r, o)| (r - o).powi(2)).sum();
    sq / (n * reference * reference)
}

/// `(T - sum R_off) / T`.
pub fn nu(offered: &[f64], capacity: f64) -> f64 {
    (capacity - offered.iter().sum::<f64>()) / capacity
}

/// Per-user reference rate used to normalize NQU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NquReference {
    /// An equal share `T / N` of system capacity.
    UserShare,
    /// One carrier at the effective SNR, `W~ log2(1 + snr_eff)`.
    Carrier,
}

impl NquReference {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "user-share" => Some(Self::UserShare),
            "carrier" => Some(Self::Carrier),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::UserShare => "user-share",
            Self::Carrier => "carrier",
        }
    }
}

/// Monte-Carlo estimate of the effective SNR: `log2(1 + snr_eff)` equals the
/// mean of `log2(1 + p gamma)` over locations drawn uniformly in a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveSnr {
    pub linear: f64,
    /// Mean spectral efficiency and its standard error, bits/s/Hz.
    pub bits: f64,
    pub std_error: f64,
}

impl EffectiveSnr {
    pub fn db(&self) -> f64 {
        10.0 * self.linear.log10()
    }
}

pub fn effective_snr_global<R: Rng + ?Sized>(
    payload: &Payload,
    p_carrier: f64,
    samples: usize,
    rng: &mut R,
) -> EffectiveSnr {
    let g0 = payload.budget.gamma(1.0, payload.carrier_bandwidth());
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        // Radius of a uniform point in the unit disc; the angle does not
        // matter for the serving beam.
        let d = rng.random::<f64>().sqrt();
        let se = (p_carrier * g0 * bessel_gain(d, 1.0)).ln_1p() / std::f64::consts::LN_2;
        sum += se;
        sum_sq += se * se;
    }
    let n = samples as f64;
    let bits = sum / n;
    let var = (sum_sq / n - bits * bits).max(0.0) * n / (n - 1.0).max(1.0);
    EffectiveSnr { linear: bits.exp2() - 1.0, bits, std_error: (var / n).sqrt() }
}

/// Fraction of beam `b`'s footprint from which each adjacent beam may pull
/// resources, by uniform sampling of the disc; `(neighbor, fraction)` pairs.
pub fn adjacent_service_area<R: Rng + ?Sized>(
    payload: &Payload,
    b: usize,
    samples: usize,
    rng: &mut R,
) -> Vec<(usize, f64)> {
    let layout = &payload.layout;
    let floor = adjacent_gain_floor();
    let centre = layout.boresight(b);
    let neighbors: Vec<usize> = layout.neighbors(b).collect();
    let mut hits = vec![0usize; neighbors.len()];
    for _ in 0..samples {
        let r = layout.radius() * rng.random::<f64>().sqrt();
        let t = std::f64::consts::TAU * rng.random::<f64>();
        let pos = [centre[0] + r * t.cos(), centre[1] + r * t.sin()];
        let gains: Vec<f64> = (0..layout.beams()).map(|k| bessel_gain(layout.distance(pos, k), 1.0)).collect();
        if let Some(s) = eligible_adjacent(layout, &gains, b, floor) {
            if let Some(i) = neighbors.iter().position(|&x| x == s) {
                hits[i] += 1;
            }
        }
    }
    neighbors.into_iter().zip(hits).map(|(s, h)| (s, h as f64 / samples as f64)).collect()
}

/// System capacity `K (W / 2) log2(1 + snr_eff)`.
pub fn capacity(payload: &Payload, snr: &EffectiveSnr) -> f64 {
    payload.beams() as f64 * payload.total_bandwidth_hz / 2.0 * snr.bits
}

/// Constants that turn a report into metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricContext {
    pub capacity: f64,
    pub nqu_reference_rate: f64,
}

impl MetricContext {
    pub fn new(payload: &Payload, snr: &EffectiveSnr, users: usize, reference: NquReference) -> Self {
        let capacity = capacity(payload, snr);
        let nqu_reference_rate = match reference {
            NquReference::UserShare => capacity / users as f64,
            NquReference::Carrier => payload.carrier_bandwidth() * snr.bits,
        };
        Self { capacity, nqu_reference_rate }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportMetrics {
    pub nqu: f64,
    pub nu: f64,
    pub offered: f64,
    pub min_rate: f64,
}

pub fn report_metrics(report: &RunReport, ctx: &MetricContext) -> ReportMetrics {
    ReportMetrics {
        nqu: nqu(&report.requested, &report.offered, ctx.nqu_reference_rate),
        nu: nu(&report.offered, ctx.capacity),
        offered: report.total_offered(),
        min_rate: report.min_rate(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Nqu,
    Nu,
    Offered,
    MinRate,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Nqu, Metric::Nu, Metric::Offered, Metric::MinRate];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Nqu => "nqu",
            Metric::Nu => "nu",
            Metric::Offered => "offered",
            Metric::MinRate => "min_rate",
        }
    }

    fn of(self, m: &ReportMetrics) -> f64 {
        match self {
            Metric::Nqu => m.nqu,
            Metric::Nu => m.nu,
            Metric::Offered => m.offered,
            Metric::MinRate => m.min_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub runs: usize,
    pub mean_nqu: f64,
    pub mean_nu: f64,
    pub mean_offered: f64,
    pub mean_min_rate: f64,
    pub max_gap: f64,
    /// Sorted samples per metric.
    pub samples: BTreeMap<Metric, Vec<f64>>,
}

impl StrategySummary {
    pub fn mean(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Nqu => self.mean_nqu,
            Metric::Nu => self.mean_nu,
            Metric::Offered => self.mean_offered,
            Metric::MinRate => self.mean_min_rate,
        }
    }

    /// Empirical CDF as `(value, cumulative probability)` points.
    pub fn cdf(&self, metric: Metric) -> Vec<(f64, f64)> {
        cdf(&self.samples[&metric])
    }
}

pub type CampaignSummary = BTreeMap<Strategy, StrategySummary>;

pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

/// Means and sorted samples per strategy. Empty input yields an empty map.
pub fn summarize<'a>(reports: impl IntoIterator<Item = &'a RunReport>, ctx: &MetricContext) -> CampaignSummary {
    let mut groups: BTreeMap<Strategy, Vec<(ReportMetrics, f64)>> = BTreeMap::new();
    for r in reports {
        groups.entry(r.strategy).or_default().push((report_metrics(r, ctx), r.max_gap()));
    }
    groups
        .into_iter()
        .map(|(s, rows)| {
            let n = rows.len() as f64;
            let mut samples = BTreeMap::new();
            for metric in Metric::ALL {
                let mut v: Vec<f64> = rows.iter().map(|(m, _)| metric.of(m)).collect();
                v.sort_by(f64::total_cmp);
                samples.insert(metric, v);
            }
            // Means are taken over sorted samples so the result does not
            // depend on report order.
            let mean = |m: Metric| samples[&m].iter().sum::<f64>() / n;
            let summary = StrategySummary {
                runs: rows.len(),
                mean_nqu: mean(Metric::Nqu),
                mean_nu: mean(Metric::Nu),
                mean_offered: mean(Metric::Offered),
                mean_min_rate: mean(Metric::MinRate),
                max_gap: rows.iter().map(|(_, g)| *g).fold(0.0, f64::max),
                samples,
            };
            (s, summary)
        })
        .collect()
}
