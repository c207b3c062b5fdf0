//! Genetic benchmark for joint power and carrier allocation with rigid
//! mapping: tournament selection, Laplace crossover, power mutation and
//! feasibility repair after every variation.

use rand::Rng;
use std::f64::consts::LN_2;

use crate::beamalloc::{BeamPlan, Strategy};
use crate::channel::{ChannelMap, Payload};
use crate::traffic::TrafficScenario;

#[derive(Debug, Clone, PartialEq)]
pub struct GaSettings {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub elite: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    /// Laplace crossover location and scales for real and integer genes.
    pub laplace_location: f64,
    pub laplace_scale_real: f64,
    pub laplace_scale_int: f64,
    /// Power mutation indices for real and integer genes.
    pub mutation_index_real: f64,
    pub mutation_index_int: f64,
}

impl Default for GaSettings {
    fn default() -> Self {
        Self {
            population: 200,
            generations: 300,
            tournament: 5,
            elite: 20,
            crossover_prob: 0.8,
            mutation_prob: 0.1,
            laplace_location: 0.0,
            laplace_scale_real: 0.15,
            laplace_scale_int: 0.35,
            mutation_index_real: 10.0,
            mutation_index_int: 4.0,
        }
    }
}

impl GaSettings {
    /// Population 4000 over 5000 generations.
    pub fn full_scale() -> Self {
        Self { population: 4000, generations: 5000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (p, name) in [(self.crossover_prob, "crossover_prob"), (self.mutation_prob, "mutation_prob")] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.population == 0 || self.tournament == 0 {
            return Err("population and tournament size must be positive".into());
        }
        if self.elite > self.population {
            return Err(format!("elite count {} exceeds population {}", self.elite, self.population));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    /// Beam powers, W.
    pub power: Vec<f64>,
    pub carriers: Vec<usize>,
}

/// Beam-level data the GA needs.
#[derive(Debug, Clone)]
pub struct GaProblem {
    /// Requested traffic per beam, bps.
    pub request: Vec<f64>,
    /// Reference SNR per carrier-Watt of each beam: the geometric mean of its
    /// users' coefficients (0 for empty beams).
    pub gamma_ref: Vec<f64>,
    pub carrier_bw: f64,
    pub carriers: usize,
    pub total_power: f64,
    pub hpa_max_power: f64,
}

impl GaProblem {
    pub fn from_scenario(payload: &Payload, channel: &ChannelMap, scenario: &TrafficScenario) -> Self {
        let gamma_ref = scenario
            .cell_members
            .iter()
            .enumerate()
            .map(|(b, m)| {
                let logs: Vec<f64> = m.iter().map(|&n| channel.gamma(n, b)).collect();
                crate::beamalloc::effective_snr(&logs).unwrap_or(0.0)
            })
            .collect();
        Self {
            request: scenario.demand_per_cell(),
            gamma_ref,
            carrier_bw: payload.carrier_bandwidth(),
            carriers: payload.carriers,
            total_power: payload.total_power_w,
            hpa_max_power: payload.hpa_max_power_w,
        }
    }

    pub fn beams(&self) -> usize {
        self.request.len()
    }

    pub fn offered(&self, b: usize, power: f64, carriers: usize) -> f64 {
        if carriers == 0 || self.gamma_ref[b] == 0.0 {
            return 0.0;
        }
        let c = carriers as f64;
        c * self.carrier_bw * (power / c * self.gamma_ref[b]).ln_1p() / LN_2
    }

    /// Quadratic unmet beam traffic, bps squared.
    pub fn fitness(&self, ind: &Individual) -> f64 {
        (0..self.beams())
            .map(|b| (self.request[b] - self.offered(b, ind.power[b], ind.carriers[b])).powi(2))
            .sum()
    }

    /// Beams by decreasing demand, ties to the lower index.
    pub fn demand_order(&self) -> Vec<usize> {
        let mut o: Vec<usize> = (0..self.beams()).collect();
        o.sort_by(|&a, &b| self.request[b].total_cmp(&self.request[a]).then(a.cmp(&b)));
        o
    }
}

/// Uniform down-scaling to the total power, then pairwise scaling of any
/// amplifier pair above its cap.
pub fn repair_power(power: &mut [f64], total: f64, hpa_max: f64) {
    let sum: f64 = power.iter().sum();
    if sum > total {
        let k = total / sum;
        power.iter_mut().for_each(|p| *p *= k);
    }
    for pair in power.chunks_mut(2) {
        let s: f64 = pair.iter().sum();
        if s > hpa_max {
            let k = hpa_max / s;
            pair.iter_mut().for_each(|p| *p *= k);
        }
    }
}

/// Adjacency sweep in the given direction (each violating beam is cut to what
/// its predecessor leaves), then reclaiming of unused carriers
/// `2M - C_c - max(C_l, C_r)` by each center beam in `order` until nothing
/// changes.
pub fn repair_bandwidth(carriers: &mut [usize], m: usize, order: &[usize], descending: bool) {
    let k = carriers.len();
    let cap = 2 * m;
    for c in carriers.iter_mut() {
        *c = (*c).min(cap);
    }
    let seq: Vec<usize> = if descending { (0..k).rev().collect() } else { (0..k).collect() };
    for &b in &seq {
        let prev = if descending { b + 1 } else { b.wrapping_sub(1) };
        if prev < k && carriers[b] + carriers[prev] > cap {
            carriers[b] = cap - carriers[prev];
        }
    }
    loop {
        let mut changed = false;
        for &b in order {
            let l = if b > 0 { carriers[b - 1] } else { 0 };
            let r = if b + 1 < k { carriers[b + 1] } else { 0 };
            let used = carriers[b] + l.max(r);
            if used < cap {
                carriers[b] += cap - used;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

fn laplace_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    if u <= 0.5 {
        a - b * u.ln()
    } else {
        a + b * u.ln()
    }
}

fn power_mutate<R: Rng + ?Sized>(rng: &mut R, x: f64, lo: f64, hi: f64, index: f64) -> f64 {
    let s = rng.random::<f64>().powf(index);
    let t = (x - lo) / (hi - x).max(1e-12);
    if t < rng.random::<f64>() {
        x - s * (x - lo)
    } else {
        x + s * (hi - x)
    }
}

fn to_integer<R: Rng + ?Sized>(rng: &mut R, v: f64, hi: usize) -> usize {
    let v = v.clamp(0.0, hi as f64);
    let r = if v.fract() == 0.0 {
        v
    } else if rng.random::<f64>() < 0.5 {
        v.floor()
    } else {
        v.ceil()
    };
    r as usize
}

#[derive(Debug, Clone)]
pub struct GaResult {
    pub best: Individual,
    pub best_fitness: f64,
    /// Best fitness after initialization and after each generation.
    pub trace: Vec<f64>,
}

struct Engine<'a, R: ?Sized> {
    problem: &'a GaProblem,
    settings: &'a GaSettings,
    order: Vec<usize>,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> Engine<'_, R> {
    fn repair(&mut self, ind: &mut Individual) {
        let p = self.problem;
        for v in ind.power.iter_mut() {
            *v = v.clamp(0.0, p.hpa_max_power);
        }
        repair_power(&mut ind.power, p.total_power, p.hpa_max_power);
        let descending = self.rng.random::<bool>();
        repair_bandwidth(&mut ind.carriers, p.carriers, &self.order, descending);
    }

    fn random_individual(&mut self) -> Individual {
        let p = self.problem;
        let k = p.beams();
        let mut ind = Individual {
            power: (0..k).map(|_| self.rng.random::<f64>() * p.hpa_max_power).collect(),
            carriers: (0..k).map(|_| self.rng.random_range(0..=2 * p.carriers)).collect(),
        };
        self.repair(&mut ind);
        ind
    }

    fn tournament(&mut self, fitness: &[f64]) -> usize {
        let n = fitness.len();
        let mut best = self.rng.random_range(0..n);
        for _ in 1..self.settings.tournament {
            let c = self.rng.random_range(0..n);
            if fitness[c] < fitness[best] {
                best = c;
            }
        }
        best
    }

    fn offspring(&mut self, a: &Individual, b: &Individual) -> [Individual; 2] {
        let s = self.settings;
        let p = self.problem;
        let k = p.beams();
        let cap = 2 * p.carriers;
        let (mut pa, mut pb) = (a.power.clone(), b.power.clone());
        let mut ca: Vec<f64> = a.carriers.iter().map(|&c| c as f64).collect();
        let mut cb: Vec<f64> = b.carriers.iter().map(|&c| c as f64).collect();
        if self.rng.random::<f64>() < s.crossover_prob {
            for j in 0..k {
                let beta = laplace_beta(self.rng, s.laplace_location, s.laplace_scale_real);
                let d = (pa[j] - pb[j]).abs();
                pa[j] += beta * d;
                pb[j] += beta * d;
                let beta = laplace_beta(self.rng, s.laplace_location, s.laplace_scale_int);
                let d = (ca[j] - cb[j]).abs();
                ca[j] += beta * d;
                cb[j] += beta * d;
            }
        }
        let mut out = Vec::with_capacity(2);
        for (mut pw, mut cr) in [(pa, ca), (pb, cb)] {
            for j in 0..k {
                pw[j] = pw[j].clamp(0.0, p.hpa_max_power);
                cr[j] = cr[j].clamp(0.0, cap as f64);
            }
            if self.rng.random::<f64>() < s.mutation_prob {
                for j in 0..k {
                    pw[j] = power_mutate(self.rng, pw[j], 0.0, p.hpa_max_power, s.mutation_index_real);
                    cr[j] = power_mutate(self.rng, cr[j], 0.0, cap as f64, s.mutation_index_int);
                }
            }
            let carriers = cr.iter().map(|&v| to_integer(self.rng, v, cap)).collect();
            let mut ind = Individual { power: pw, carriers };
            self.repair(&mut ind);
            out.push(ind);
        }
        let second = out.pop().expect("two children");
        [out.pop().expect("two children"), second]
    }
}

pub fn run_ga<R: Rng + ?Sized>(problem: &GaProblem, settings: &GaSettings, rng: &mut R) -> GaResult {
    let mut eng = Engine { problem, settings, order: problem.demand_order(), rng };
    let mut pop: Vec<Individual> = (0..settings.population).map(|_| eng.random_individual()).collect();
    let mut fit: Vec<f64> = pop.iter().map(|i| problem.fitness(i)).collect();
    let ranked = |fit: &[f64]| {
        let mut idx: Vec<usize> = (0..fit.len()).collect();
        idx.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));
        idx
    };
    let mut trace = vec![fit.iter().copied().fold(f64::INFINITY, f64::min)];
    for _ in 0..settings.generations {
        let order = ranked(&fit);
        let mut next: Vec<Individual> = order[..settings.elite].iter().map(|&i| pop[i].clone()).collect();
        let mut next_fit: Vec<f64> = order[..settings.elite].iter().map(|&i| fit[i]).collect();
        while next.len() < settings.population {
            let a = eng.tournament(&fit);
            let b = eng.tournament(&fit);
            for child in eng.offspring(&pop[a], &pop[b]) {
                if next.len() < settings.population {
                    next_fit.push(problem.fitness(&child));
                    next.push(child);
                }
            }
        }
        pop = next;
        fit = next_fit;
        trace.push(fit.iter().copied().fold(f64::INFINITY, f64::min));
    }
    let best = ranked(&fit)[0];
    GaResult { best: pop[best].clone(), best_fitness: fit[best], trace }
}

/// Joint power and bandwidth by the genetic benchmark; carriers of an
/// amplifier pair share its power equally.
pub fn allocate_bw_pow<R: Rng + ?Sized>(
    payload: &Payload,
    channel: &ChannelMap,
    scenario: &TrafficScenario,
    settings: &GaSettings,
    rng: &mut R,
) -> (BeamPlan, GaResult) {
    let problem = GaProblem::from_scenario(payload, channel, scenario);
    let result = run_ga(&problem, settings, rng);
    let ind = &result.best;
    let k = payload.beams();
    let carrier_power = (0..k)
        .map(|b| {
            let a = b & !1;
            let c = ind.carriers[a] + ind.carriers[a + 1];
            if c == 0 {
                0.0
            } else {
                (ind.power[a] + ind.power[a + 1]) / c as f64
            }
        })
        .collect();
    let plan = BeamPlan {
        strategy: Strategy::BwPow,
        power_fraction: None,
        bandwidth_hz: ind.carriers.iter().map(|&c| c as f64 * payload.carrier_bandwidth()).collect(),
        carriers: ind.carriers.clone(),
        served: scenario.cell_members.clone(),
        carrier_power,
    };
    (plan, result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn power_repair_rules() {
        let mut p = vec![40.0; 6];
        repair_power(&mut p, 200.0, 1000.0);
        assert!(p.iter().all(|&v| (v - 40.0 * 200.0 / 240.0).abs() < 1e-12));
        let mut p = vec![100.0, 50.0];
        repair_power(&mut p, 200.0, 133.0);
        assert!((p[0] - 100.0 * 133.0 / 150.0).abs() < 1e-12);
        let mut p = vec![100.0, 50.0];
        repair_power(&mut p, 200.0, 150.0);
        assert_eq!(p, vec![100.0, 50.0]);
        let mut p = vec![100.0, 50.0];
        repair_power(&mut p, 200.0, 120.0);
        assert!((p[0] - 80.0).abs() < 1e-12 && (p[1] - 40.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_all_maximal() {
        let order: Vec<usize> = (0..6).collect();
        let mut c = vec![8; 6];
        repair_bandwidth(&mut c, 4, &order, false);
        assert_eq!(c, vec![8, 0, 8, 0, 8, 0]);
        let mut c = vec![8; 6];
        repair_bandwidth(&mut c, 4, &order, true);
        assert_eq!(c, vec![0, 8, 0, 8, 0, 8]);
    }

    #[test]
    fn feasible_saturated_input_is_unchanged() {
        let order: Vec<usize> = (0..6).collect();
        let mut c = vec![4; 6];
        repair_bandwidth(&mut c, 4, &order, false);
        assert_eq!(c, vec![4; 6]);
    }

    #[test]
    fn reclaims_unused_carriers() {
        // Triplet 4, 2, 3 leaves 8 - 2 - 4 = 2 carriers idle in the middle.
        let mut c = vec![4, 2, 3];
        repair_bandwidth(&mut c, 4, &[1, 0, 2], false);
        assert_eq!(c, vec![4, 4, 4]);
    }

    fn toy() -> GaProblem {
        GaProblem {
            request: vec![5e9, 0.0],
            gamma_ref: vec![3.0, 0.0],
            carrier_bw: 62.5e6,
            carriers: 4,
            total_power: 200.0,
            hpa_max_power: 133.0,
        }
    }

    #[test]
    fn fitness_formula() {
        let p = toy();
        let zero = Individual { power: vec![0.0; 2], carriers: vec![0; 2] };
        assert_eq!(p.fitness(&zero), 25e18);
        let ind = Individual { power: vec![100.0, 0.0], carriers: vec![8, 0] };
        let direct = (5e9 - 8.0 * 62.5e6 * (1.0 + 100.0 / 8.0 * 3.0f64).log2()).powi(2);
        assert!((p.fitness(&ind) - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn toy_reaches_closed_form() {
        // Demand beyond reach: the optimum puts every carrier and the whole
        // amplifier cap on the loaded beam.
        let p = toy();
        let opt = p.fitness(&Individual { power: vec![133.0, 0.0], carriers: vec![8, 0] });
        let settings = GaSettings { population: 60, generations: 200, ..GaSettings::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let res = run_ga(&p, &settings, &mut rng);
        assert!(res.best_fitness <= opt * 1.01, "{} vs {opt}", res.best_fitness);
        for w in res.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let p = toy();
        let s = GaSettings { population: 30, generations: 20, ..GaSettings::default() };
        let a = run_ga(&p, &s, &mut ChaCha8Rng::seed_from_u64(9));
        let b = run_ga(&p, &s, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.best, b.best);
        assert_eq!(a.trace, b.trace);
    }
}
