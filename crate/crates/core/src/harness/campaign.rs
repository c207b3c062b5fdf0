//! Monte-Carlo campaign: per realization, one scenario shared by every
//! strategy, then beam-level allocation, carrier scheduling and metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

use super::config::CampaignConfig;
use crate::beamalloc::{allocate_bandwidth, allocate_mapping, allocate_power, BeamPlan, MappingMode, Strategy};
use crate::channel::{build_channel, ChannelMap, Payload};
use crate::gabench::allocate_bw_pow;
use crate::intrabeam::{schedule_carriers, BeamSchedulingInstance, ScheduleMethod, SchedulerOptions};
use crate::metrics::{effective_snr_global, summarize, CampaignSummary, EffectiveSnr, MetricContext, RunReport};
use crate::traffic::{generate_scenario, TrafficScenario};

/// Stream used for the effective-SNR estimate; realizations use streams
/// `r` (scenario) and `r | GA_STREAM_BIT` (genetic benchmark).
pub const SNR_STREAM: u64 = u64::MAX;
pub const GA_STREAM_BIT: u64 = 1 << 63;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub report: Result<RunReport, String>,
    /// Beams scheduled by the heuristic rather than an exact method.
    pub heuristic_beams: usize,
    pub ga_trace: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationResult {
    pub index: usize,
    pub seed: u64,
    pub stream: u64,
    pub demand_std: f64,
    pub runs: Vec<StrategyRun>,
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub snr: EffectiveSnr,
    pub metrics: MetricContext,
    pub realizations: Vec<RealizationResult>,
    pub summary: CampaignSummary,
    pub failures: BTreeMap<Strategy, usize>,
}

impl CampaignOutcome {
    pub fn reports(&self) -> impl Iterator<Item = &RunReport> {
        self.realizations.iter().flat_map(|r| r.runs.iter().filter_map(|s| s.report.as_ref().ok()))
    }
}

/// Capacity inputs shared by all realizations.
pub fn campaign_context(config: &CampaignConfig) -> (EffectiveSnr, MetricContext) {
    let p = &config.payload;
    let snr = effective_snr_global(
        p,
        p.uniform_carrier_power(),
        config.snr_samples,
        &mut stream_rng(config.seed, SNR_STREAM),
    );
    let ctx = MetricContext::new(p, &snr, config.scenario.n_users, config.nqu_reference);
    (snr, ctx)
}

/// Per-user rates after scheduling every beam of `plan` on its carriers,
/// with the per-beam gaps and the number of heuristically scheduled beams.
pub fn schedule_plan(
    payload: &Payload,
    channel: &ChannelMap,
    scenario: &TrafficScenario,
    plan: &BeamPlan,
    opts: &SchedulerOptions,
) -> Result<(Vec<f64>, Vec<f64>, usize), String> {
    let wc = payload.carrier_bandwidth();
    let mut offered = vec![0.0; scenario.users.len()];
    let mut gaps = Vec::with_capacity(plan.served.len());
    let mut heuristic = 0;
    for (b, members) in plan.served.iter().enumerate() {
        let p = plan.carrier_power[b];
        let inst = BeamSchedulingInstance {
            efficiency: members.iter().map(|&n| (p * channel.gamma(n, b)).ln_1p() / std::f64::consts::LN_2).collect(),
            demand: members.iter().map(|&n| scenario.users[n].demand).collect(),
            carriers: plan.carriers[b],
            carrier_bw: wc,
        };
        let out = schedule_carriers(&inst, opts).map_err(|e| format!("beam {b} scheduling: {e}"))?;
        if out.method == ScheduleMethod::Heuristic {
            heuristic += 1;
        }
        for (&n, r) in members.iter().zip(out.schedule.offered(&inst)) {
            offered[n] = r;
        }
        gaps.push(out.gap);
    }
    Ok((offered, gaps, heuristic))
}

fn run_strategy(
    config: &CampaignConfig,
    channel: &ChannelMap,
    scenario: &TrafficScenario,
    strategy: Strategy,
    index: usize,
) -> StrategyRun {
    let p = &config.payload;
    let mut ga_trace = None;
    let plan = match strategy {
        Strategy::Pow => allocate_power(p, channel, scenario),
        Strategy::Bw => allocate_bandwidth(p, channel, scenario),
        Strategy::Map => allocate_mapping(p, channel, scenario, MappingMode::FixedBandwidth),
        Strategy::BwMap => allocate_mapping(p, channel, scenario, MappingMode::FlexibleBandwidth),
        Strategy::BwPow => {
            let mut rng = stream_rng(config.seed, index as u64 | GA_STREAM_BIT);
            let (plan, result) = allocate_bw_pow(p, channel, scenario, &config.ga, &mut rng);
            ga_trace = Some(result.trace);
            Ok(plan)
        }
    };
    let fail = |msg: String| StrategyRun { strategy, report: Err(msg), heuristic_beams: 0, ga_trace: None };
    let plan = match plan {
        Ok(plan) => plan,
        Err(e) => return fail(e.to_string()),
    };
    match schedule_plan(p, channel, scenario, &plan, &config.scheduler) {
        Ok((offered, gaps, heuristic_beams)) => {
            let requested = scenario.demands();
            let per_beam = |v: &[f64]| -> Vec<f64> {
                plan.served.iter().map(|m| m.iter().map(|&n| v[n]).sum()).collect()
            };
            let report = RunReport {
                strategy,
                realization: index,
                seed: config.seed,
                beam_requested: per_beam(&requested),
                beam_offered: per_beam(&offered),
                requested,
                offered,
                gaps,
            };
            StrategyRun { strategy, report: Ok(report), heuristic_beams, ga_trace }
        }
        Err(e) => fail(e),
    }
}

/// Replays realization `index` of a campaign.
pub fn run_realization(config: &CampaignConfig, index: usize) -> RealizationResult {
    let stream = index as u64;
    let mut rng = stream_rng(config.seed, stream);
    let base = RealizationResult { index, seed: config.seed, stream, demand_std: f64::NAN, runs: Vec::new() };
    let all_failed = |msg: String| RealizationResult {
        runs: config
            .strategies
            .iter()
            .map(|&strategy| StrategyRun { strategy, report: Err(msg.clone()), heuristic_beams: 0, ga_trace: None })
            .collect(),
        ..base.clone()
    };
    let scenario = match generate_scenario(&config.scenario, &config.payload.layout, &mut rng) {
        Ok(s) => s,
        Err(e) => return all_failed(format!("scenario: {e}")),
    };
    let channel = match build_channel(&config.payload, &scenario.positions()) {
        Ok(c) => c,
        Err(e) => return all_failed(format!("channel: {e}")),
    };
    let runs = config
        .strategies
        .iter()
        .map(|&s| run_strategy(config, &channel, &scenario, s, index))
        .collect();
    RealizationResult { demand_std: scenario.demand_std(), runs, ..base }
}

pub fn run_campaign(config: &CampaignConfig) -> CampaignOutcome {
    let (snr, metrics) = campaign_context(config);
    let realizations: Vec<RealizationResult> =
        (0..config.realizations).into_par_iter().map(|r| run_realization(config, r)).collect();
    let mut failures: BTreeMap<Strategy, usize> = config.strategies.iter().map(|&s| (s, 0)).collect();
    for r in &realizations {
        for run in &r.runs {
            if let Err(msg) = &run.report {
                log::warn!("realization {} {}: {msg}", r.index, run.strategy);
                *failures.entry(run.strategy).or_default() += 1;
            }
        }
    }
    let summary = summarize(
        realizations.iter().flat_map(|r| r.runs.iter().filter_map(|s| s.report.as_ref().ok())),
        &metrics,
    );
    CampaignOutcome { snr, metrics, realizations, summary, failures }
}
