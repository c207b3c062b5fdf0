//! Dirichlet-shaped traffic: per-cell user counts, uniform placement inside
//! each cell disc, and a fixed rate per user.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use std::f64::consts::PI;
use thiserror::Error;

use crate::channel::BeamLayout;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("concentration parameter {index} must be positive, got {value}")]
    Alpha { index: usize, value: f64 },
    #[error("expected {expected} concentration parameters, got {got}")]
    AlphaLength { got: usize, expected: usize },
    #[error("preset {0} needs at least 4 beams")]
    PresetBeams(&'static str),
    #[error("rate per user must be positive, got {0}")]
    Rate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Homogeneous traffic.
    Ht,
    /// One hot-spot cell.
    Hs,
    /// Two adjacent hot cells sharing an amplifier.
    Whs,
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Ht => "HT",
            Preset::Hs => "HS",
            Preset::Whs => "WHS",
            Preset::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HT" => Some(Preset::Ht),
            "HS" => Some(Preset::Hs),
            "WHS" => Some(Preset::Whs),
            "CUSTOM" => Some(Preset::Custom),
            _ => None,
        }
    }

    /// Concentration vector over `beams` cells. The hot cells are the third
    /// (and fourth) of the row. `None` for [`Preset::Custom`].
    pub fn alpha(self, beams: usize) -> Result<Option<Vec<f64>>, TrafficError> {
        let hot = |base: f64, peak: f64, cells: &[usize], name| {
            if beams < 4 {
                return Err(TrafficError::PresetBeams(name));
            }
            let mut a = vec![base; beams];
            for &c in cells {
                a[c] = peak;
            }
            Ok(Some(a))
        };
        match self {
            Preset::Ht => Ok(Some(vec![1.0; beams])),
            Preset::Hs => hot(5.0, 30.0, &[2], "HS"),
            Preset::Whs => hot(10.0, 40.0, &[2, 3], "WHS"),
            Preset::Custom => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub alpha: Vec<f64>,
    pub n_users: usize,
    pub rate_per_user: f64,
    pub preset: Preset,
}

impl ScenarioSpec {
    /// 272 users at 25 Mbps with the preset's concentrations.
    pub fn preset(preset: Preset, beams: usize) -> Result<Self, TrafficError> {
        let alpha = preset.alpha(beams)?.unwrap_or_else(|| vec![1.0; beams]);
        Ok(Self { alpha, n_users: 272, rate_per_user: 25e6, preset })
    }

    pub fn validate(&self, beams: usize) -> Result<(), TrafficError> {
        if self.alpha.len() != beams {
            return Err(TrafficError::AlphaLength { got: self.alpha.len(), expected: beams });
        }
        check_alpha(&self.alpha)?;
        if !(self.rate_per_user > 0.0) {
            return Err(TrafficError::Rate(self.rate_per_user));
        }
        Ok(())
    }
}

fn check_alpha(alpha: &[f64]) -> Result<(), TrafficError> {
    for (index, &value) in alpha.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(TrafficError::Alpha { index, value });
        }
    }
    Ok(())
}

/// One Dirichlet draw via normalized independent Gamma(alpha_i, 1) variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>, TrafficError> {
    check_alpha(alpha)?;
    loop {
        let draws: Vec<f64> = alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0).expect("checked shape").sample(rng))
            .collect();
        let total: f64 = draws.iter().sum();
        // All-zero underflow is only possible for tiny shapes; redraw.
        if total > 0.0 {
            return Ok(draws.into_iter().map(|g| g / total).collect());
        }
    }
}

/// Integer counts proportional to `fractions` summing exactly to `total`:
/// floors first, then one extra unit to the largest remainders, ties to the
/// lowest index.
pub fn largest_remainder(fractions: &[f64], total: usize) -> Vec<usize> {
    let scaled: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - counts[a] as f64;
        let rb = scaled[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    if assigned <= total {
        for &i in order.iter().take(total - assigned) {
            counts[i] += 1;
        }
    } else {
        // Floating error can only overshoot by a unit or so; trim the
        // smallest remainders.
        for &i in order.iter().rev().take(assigned - total) {
            counts[i] -= 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub pos: [f64; 2],
    pub demand: f64,
    pub cell: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficScenario {
    pub users: Vec<User>,
    pub cell_members: Vec<Vec<usize>>,
}

impl TrafficScenario {
    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.users.iter().map(|u| u.pos).collect()
    }

    pub fn demands(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.demand).collect()
    }

    pub fn cells(&self) -> Vec<usize> {
        self.users.iter().map(|u| u.cell).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.cell_members.iter().map(Vec::len).collect()
    }

    pub fn demand_per_cell(&self) -> Vec<f64> {
        self.cell_members
            .iter()
            .map(|m| m.iter().map(|&n| self.users[n].demand).sum())
            .collect()
    }

    pub fn total_demand(&self) -> f64 {
        self.users.iter().map(|u| u.demand).sum()
    }

    pub fn demand_std(&self) -> f64 {
        population_std(&self.demand_per_cell())
    }
}

pub fn population_std(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Users for fixed per-cell counts, placed uniformly in each cell disc.
pub fn place_users<R: Rng + ?Sized>(
    counts: &[usize],
    rate: f64,
    layout: &BeamLayout,
    rng: &mut R,
) -> TrafficScenario {
    let mut users = Vec::with_capacity(counts.iter().sum());
    let mut cell_members = vec![Vec::new(); counts.len()];
    for (b, &count) in counts.iter().enumerate() {
        let c = layout.boresight(b);
        for _ in 0..count {
            let r = layout.radius() * rng.random::<f64>().sqrt();
            let th = 2.0 * PI * rng.random::<f64>();
            cell_members[b].push(users.len());
            users.push(User { pos: [c[0] + r * th.cos(), c[1] + r * th.sin()], demand: rate, cell: b });
        }
    }
    TrafficScenario { users, cell_members }
}

pub fn generate_scenario<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    layout: &BeamLayout,
    rng: &mut R,
) -> Result<TrafficScenario, TrafficError> {
    spec.validate(layout.beams())?;
    let fractions = sample_dirichlet(&spec.alpha, rng)?;
    let counts = largest_remainder(&fractions, spec.n_users);
    Ok(place_users(&counts, spec.rate_per_user, layout, rng))
}
