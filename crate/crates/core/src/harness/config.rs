//! Campaign configuration: TOML with sections `[system]`, `[scenario]`,
//! `[strategies]`, `[solver]`, `[ga]` and `[output]`. Every key is optional;
//! missing keys take the reference payload values.

use serde::Deserialize;
use std::fmt;
use std::ops::Range;
use std::path::PathBuf;
use std::time::Duration;
use toml::Spanned;

use crate::beamalloc::Strategy;
use crate::channel::{BeamLayout, LinkBudget, Payload};
use crate::gabench::GaSettings;
use crate::intrabeam::SchedulerOptions;
use crate::metrics::NquReference;
use crate::traffic::{Preset, ScenarioSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub cdf: bool,
    pub ga_trace: bool,
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub payload: Payload,
    pub scenario: ScenarioSpec,
    pub realizations: usize,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
    pub scheduler: SchedulerOptions,
    pub ga: GaSettings,
    /// Monte-Carlo samples for the effective SNR.
    pub snr_samples: usize,
    pub nqu_reference: NquReference,
    pub output: OutputConfig,
    pub warnings: Vec<String>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        validate_config("").expect("defaults are valid")
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct Raw {
    system: RawSystem,
    scenario: RawScenario,
    strategies: RawStrategies,
    solver: RawSolver,
    ga: RawGa,
    output: RawOutput,
}

type Field<T> = Option<Spanned<T>>;

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawSystem {
    beams: Field<i64>,
    beam_radius: Field<f64>,
    carriers_per_color: Field<i64>,
    total_bandwidth_mhz: Field<f64>,
    total_power_w: Field<f64>,
    hpa_max_power_w: Field<f64>,
    max_antenna_gain_dbi: Field<f64>,
    free_space_loss_db: Field<f64>,
    atmospheric_loss_db: Field<f64>,
    depointing_loss_db: Field<f64>,
    g_over_t_dbk: Field<f64>,
    carrier_frequency_ghz: Field<f64>,
    /// Boresight SNR under uniform power the offset is calibrated to.
    boresight_snr_db: Field<f64>,
    /// Explicit offset; disables calibration.
    calibration_offset_db: Field<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawScenario {
    preset: Field<String>,
    alpha: Field<Vec<f64>>,
    users: Field<i64>,
    rate_mbps: Field<f64>,
    realizations: Field<i64>,
    seed: Field<i64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawStrategies {
    run: Field<Vec<Spanned<String>>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawSolver {
    max_binaries: Field<i64>,
    enumerate_users: Field<i64>,
    node_limit: Field<i64>,
    time_limit_s: Field<f64>,
    snr_samples: Field<i64>,
    nqu_reference: Field<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawGa {
    population: Field<i64>,
    generations: Field<i64>,
    tournament: Field<i64>,
    elite: Field<i64>,
    crossover_prob: Field<f64>,
    mutation_prob: Field<f64>,
    laplace_location: Field<f64>,
    laplace_scale_real: Field<f64>,
    laplace_scale_int: Field<f64>,
    mutation_index_real: Field<f64>,
    mutation_index_int: Field<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: Field<String>,
    cdf: Field<bool>,
    ga_trace: Field<bool>,
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        let (line, column) = line_col(self.text, span.start);
        ConfigError { line, column, message: message.into() }
    }

    fn real(&self, f: &Field<f64>, default: f64, name: &str, ok: impl Fn(f64) -> bool, what: &str) -> Result<f64, ConfigError> {
        match f {
            None => Ok(default),
            Some(s) if ok(*s.get_ref()) && s.get_ref().is_finite() => Ok(*s.get_ref()),
            Some(s) => Err(self.err(s.span(), format!("{name} must be {what}, got {}", s.get_ref()))),
        }
    }

    fn count(&self, f: &Field<i64>, default: usize, name: &str, min: i64) -> Result<usize, ConfigError> {
        match f {
            None => Ok(default),
            Some(s) if *s.get_ref() >= min => Ok(*s.get_ref() as usize),
            Some(s) => Err(self.err(s.span(), format!("{name} must be at least {min}, got {}", s.get_ref()))),
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

const POSITIVE: &str = "positive";
const NONNEGATIVE: &str = "nonnegative";

/// Parses and checks a configuration, filling defaults.
pub fn validate_config(text: &str) -> Result<CampaignConfig, ConfigError> {
    let cx = Ctx { text };
    let raw: Raw = toml::from_str(text).map_err(|e| {
        let start = e.span().map_or(0, |s| s.start);
        cx.err(start..start, e.message().to_string())
    })?;
    let mut warnings = Vec::new();
    let pos = |x: f64| x > 0.0;
    let nonneg = |x: f64| x >= 0.0;
    let any = |_: f64| true;

    let s = &raw.system;
    let beams = cx.count(&s.beams, 6, "beams", 2)?;
    if beams % 2 == 1 {
        let span = s.beams.as_ref().expect("odd default impossible").span();
        return Err(cx.err(span, format!("beams must be even so amplifiers pair them, got {beams}")));
    }
    let radius = cx.real(&s.beam_radius, 1.0, "beam_radius", pos, POSITIVE)?;
    let carriers = cx.count(&s.carriers_per_color, 4, "carriers_per_color", 1)?;
    let bw = cx.real(&s.total_bandwidth_mhz, 500.0, "total_bandwidth_mhz", pos, POSITIVE)? * 1e6;
    let pt = cx.real(&s.total_power_w, 200.0, "total_power_w", pos, POSITIVE)?;
    let pmax = cx.real(&s.hpa_max_power_w, 133.0, "hpa_max_power_w", pos, POSITIVE)?;
    if pmax > pt {
        warnings.push(format!(
            "hpa_max_power_w = {pmax} exceeds total_power_w = {pt}; the amplifier cap never binds"
        ));
    }
    let d = LinkBudget::default();
    let budget = LinkBudget {
        g_max_dbi: cx.real(&s.max_antenna_gain_dbi, d.g_max_dbi, "max_antenna_gain_dbi", any, "")?,
        fsl_db: cx.real(&s.free_space_loss_db, d.fsl_db, "free_space_loss_db", nonneg, NONNEGATIVE)?,
        atm_db: cx.real(&s.atmospheric_loss_db, d.atm_db, "atmospheric_loss_db", nonneg, NONNEGATIVE)?,
        depoint_db: cx.real(&s.depointing_loss_db, d.depoint_db, "depointing_loss_db", nonneg, NONNEGATIVE)?,
        g_over_t_db: cx.real(&s.g_over_t_dbk, d.g_over_t_db, "g_over_t_dbk", any, "")?,
        f_carrier_ghz: cx.real(&s.carrier_frequency_ghz, d.f_carrier_ghz, "carrier_frequency_ghz", pos, POSITIVE)?,
        ..d
    };
    let layout = BeamLayout::new(beams, radius).expect("checked beam count and radius");
    let mut payload = Payload {
        layout,
        budget,
        carriers,
        total_bandwidth_hz: bw,
        total_power_w: pt,
        hpa_max_power_w: pmax,
    };
    if let Some(off) = &s.calibration_offset_db {
        if s.boresight_snr_db.is_some() {
            return Err(cx.err(off.span(), "set either calibration_offset_db or boresight_snr_db, not both"));
        }
        payload.budget.calibration_offset_db = cx.real(&s.calibration_offset_db, 0.0, "calibration_offset_db", any, "")?;
    } else {
        let target = cx.real(&s.boresight_snr_db, 15.0, "boresight_snr_db", any, "")?;
        payload.budget =
            payload.budget.clone().calibrated(target, payload.uniform_carrier_power(), payload.carrier_bandwidth());
    }

    let sc = &raw.scenario;
    let preset = match &sc.preset {
        None if sc.alpha.is_some() => Preset::Custom,
        None => Preset::Ht,
        Some(p) => Preset::parse(p.get_ref()).ok_or_else(|| {
            cx.err(p.span(), format!("unknown preset {:?}; expected HT, HS, WHS or custom", p.get_ref()))
        })?,
    };
    let alpha = match (&sc.alpha, preset) {
        (Some(a), Preset::Custom) => {
            if a.get_ref().len() != beams {
                return Err(cx.err(
                    a.span(),
                    format!("alpha has {} entries but there are {beams} beams", a.get_ref().len()),
                ));
            }
            if let Some(v) = a.get_ref().iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(cx.err(a.span(), format!("alpha entries must be positive, got {v}")));
            }
            a.get_ref().clone()
        }
        (Some(a), _) => {
            return Err(cx.err(a.span(), format!("alpha is only allowed with preset = \"custom\", not {}", preset.name())));
        }
        (None, Preset::Custom) => {
            let span = sc.preset.as_ref().map_or(0..0, |p| p.span());
            return Err(cx.err(span, "preset \"custom\" needs an alpha vector"));
        }
        (None, p) => p
            .alpha(beams)
            .map_err(|e| cx.err(sc.preset.as_ref().map_or(0..0, |p| p.span()), e.to_string()))?
            .expect("named preset"),
    };
    let scenario = ScenarioSpec {
        alpha,
        n_users: cx.count(&sc.users, 272, "users", 1)?,
        rate_per_user: cx.real(&sc.rate_mbps, 25.0, "rate_mbps", pos, POSITIVE)? * 1e6,
        preset,
    };
    let realizations = cx.count(&sc.realizations, 500, "realizations", 1)?;
    let seed = match &sc.seed {
        None => 1,
        Some(v) => *v.get_ref() as u64,
    };

    let strategies = match &raw.strategies.run {
        None => vec![Strategy::Pow, Strategy::Bw, Strategy::Map, Strategy::BwMap],
        Some(list) => {
            if list.get_ref().is_empty() {
                return Err(cx.err(list.span(), "strategy list must not be empty"));
            }
            let mut out = Vec::new();
            for item in list.get_ref() {
                let s = Strategy::parse(item.get_ref()).ok_or_else(|| {
                    cx.err(
                        item.span(),
                        format!("unknown strategy {:?}; expected POW, BW, MAP, BW-MAP or BW-POW", item.get_ref()),
                    )
                })?;
                if out.contains(&s) {
                    return Err(cx.err(item.span(), format!("strategy {s} listed twice")));
                }
                out.push(s);
            }
            out
        }
    };

    let so = &raw.solver;
    let sd = SchedulerOptions::default();
    let scheduler = SchedulerOptions {
        max_binaries: cx.count(&so.max_binaries, sd.max_binaries, "max_binaries", 0)?,
        enumerate_users: cx.count(&so.enumerate_users, sd.enumerate_users, "enumerate_users", 0)?,
        node_limit: cx.count(&so.node_limit, sd.node_limit, "node_limit", 1)?,
        time_limit: match &so.time_limit_s {
            None => None,
            Some(_) => Some(Duration::from_secs_f64(cx.real(&so.time_limit_s, 0.0, "time_limit_s", pos, POSITIVE)?)),
        },
    };
    if let Some(f) = so.enumerate_users.as_ref().filter(|f| *f.get_ref() > 16) {
        return Err(cx.err(f.span(), format!("enumerate_users must be at most 16, got {}", f.get_ref())));
    }
    if scheduler.time_limit.is_some() {
        warnings.push("time_limit_s makes scheduling outcomes depend on machine speed".into());
    }
    let snr_samples = cx.count(&so.snr_samples, 100_000, "snr_samples", 2)?;
    let nqu_reference = match &so.nqu_reference {
        None => NquReference::UserShare,
        Some(r) => NquReference::parse(r.get_ref()).ok_or_else(|| {
            cx.err(r.span(), format!("unknown nqu_reference {:?}; expected user-share or carrier", r.get_ref()))
        })?,
    };

    let g = &raw.ga;
    let gd = GaSettings::default();
    let ga = GaSettings {
        population: cx.count(&g.population, gd.population, "population", 2)?,
        generations: cx.count(&g.generations, gd.generations, "generations", 0)?,
        tournament: cx.count(&g.tournament, gd.tournament, "tournament", 1)?,
        elite: cx.count(&g.elite, gd.elite, "elite", 0)?,
        crossover_prob: cx.real(&g.crossover_prob, gd.crossover_prob, "crossover_prob", |p| (0.0..=1.0).contains(&p), "in [0, 1]")?,
        mutation_prob: cx.real(&g.mutation_prob, gd.mutation_prob, "mutation_prob", |p| (0.0..=1.0).contains(&p), "in [0, 1]")?,
        laplace_location: cx.real(&g.laplace_location, gd.laplace_location, "laplace_location", any, "")?,
        laplace_scale_real: cx.real(&g.laplace_scale_real, gd.laplace_scale_real, "laplace_scale_real", pos, POSITIVE)?,
        laplace_scale_int: cx.real(&g.laplace_scale_int, gd.laplace_scale_int, "laplace_scale_int", pos, POSITIVE)?,
        mutation_index_real: cx.real(&g.mutation_index_real, gd.mutation_index_real, "mutation_index_real", pos, POSITIVE)?,
        mutation_index_int: cx.real(&g.mutation_index_int, gd.mutation_index_int, "mutation_index_int", pos, POSITIVE)?,
    };
    if let Err(msg) = ga.validate() {
        let span = g.elite.as_ref().map_or(0..0, |e| e.span());
        return Err(cx.err(span, msg));
    }

    let o = &raw.output;
    let output = OutputConfig {
        dir: o.dir.as_ref().map(|d| PathBuf::from(d.get_ref())),
        cdf: o.cdf.as_ref().is_none_or(|c| *c.get_ref()),
        ga_trace: o.ga_trace.as_ref().is_some_and(|c| *c.get_ref()),
    };

    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(CampaignConfig {
        payload,
        scenario,
        realizations,
        seed,
        strategies,
        scheduler,
        ga,
        snr_samples,
        nqu_reference,
        output,
        warnings,
    })
}
