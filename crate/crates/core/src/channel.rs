//! Beam geometry, Bessel antenna pattern, link budget and co-channel
//! eligibility of non-dominant beams.
//!
//! Distances are in units of the beam radius. One SNR function is used
//! throughout: a carrier of power `p` (W) occupying one carrier bandwidth
//! sees SNR `p * gamma[n][b]`, with thermal noise over the carrier counted
//! once inside `gamma`.

use thiserror::Error;

pub const BOLTZMANN_DB: f64 = -228.6;
/// Places the -3 dB contour of the pattern at one beam radius.
pub const BESSEL_U_SCALE: f64 = 2.07123;
pub const MIN_CARRIER_TO_INTERFERENCE_DB: f64 = 23.0;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("beam count must be even and positive, got {0}")]
    BeamCount(usize),
    #[error("beam radius must be positive, got {0}")]
    Radius(f64),
    #[error("user {index} at ({x}, {y}) lies outside every beam footprint")]
    OutsideFootprint { index: usize, x: f64, y: f64 },
    #[error("an amplifier pair must carry at least one carrier")]
    NoCarriers,
    #[error("negative loss in link budget: {0}")]
    NegativeLoss(&'static str),
}

/// Relative Bessel pattern `(J1(u)/(2u) + 36 J3(u)/u^3)^2` scaled by `g_max`,
/// with `u = 2.07123 d`. The bracket tends to `1/4 + 3/4` at `d = 0`.
pub fn bessel_gain(d: f64, g_max: f64) -> f64 {
    let u = BESSEL_U_SCALE * d;
    let amp = if u < 1e-4 {
        // Leading series terms of both ratios.
        let u2 = u * u;
        (0.25 - u2 / 32.0) + 0.75 * (1.0 - u2 / 16.0)
    } else {
        libm::jn(1, u) / (2.0 * u) + 36.0 * libm::jn(3, u) / (u * u * u)
    };
    g_max * amp * amp
}

/// A row of `K` beams with boresights `2R` apart; beams `2j` and `2j + 1` share
/// an amplifier and colors alternate along the row.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamLayout {
    beams: usize,
    radius: f64,
}

impl BeamLayout {
    pub fn new(beams: usize, radius: f64) -> Result<Self, ChannelError> {
        if beams == 0 || beams % 2 != 0 {
            return Err(ChannelError::BeamCount(beams));
        }
        if !(radius > 0.0) {
            return Err(ChannelError::Radius(radius));
        }
        Ok(Self { beams, radius })
    }

    pub fn beams(&self) -> usize {
        self.beams
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn boresight(&self, b: usize) -> [f64; 2] {
        [2.0 * self.radius * b as f64, 0.0]
    }

    pub fn hpa_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.beams / 2).map(|j| (2 * j, 2 * j + 1)).collect()
    }

    pub fn hpa_of(&self, b: usize) -> usize {
        b / 2
    }

    pub fn partner(&self, b: usize) -> usize {
        b ^ 1
    }

    pub fn color(&self, b: usize) -> usize {
        b % 2
    }

    pub fn neighbors(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        [b.checked_sub(1), Some(b + 1)]
            .into_iter()
            .flatten()
            .filter(|&s| s < self.beams)
    }

    /// Distance from `pos` to the boresight of `b`, in beam radii.
    pub fn distance(&self, pos: [f64; 2], b: usize) -> f64 {
        let c = self.boresight(b);
        (pos[0] - c[0]).hypot(pos[1] - c[1]) / self.radius
    }
}

/// Forward-link budget in dB; `calibration_offset_db` absorbs losses the
/// itemized budget does not account for.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub g_max_dbi: f64,
    pub fsl_db: f64,
    pub atm_db: f64,
    pub depoint_db: f64,
    pub g_over_t_db: f64,
    pub f_carrier_ghz: f64,
    pub boltzmann_db: f64,
    pub calibration_offset_db: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            g_max_dbi: 52.0,
            fsl_db: 210.0,
            atm_db: 0.4,
            depoint_db: 0.5,
            g_over_t_db: 16.25,
            f_carrier_ghz: 20.0,
            boltzmann_db: BOLTZMANN_DB,
            calibration_offset_db: 0.0,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<(), ChannelError> {
        for (v, name) in [
            (self.fsl_db, "free-space loss"),
            (self.atm_db, "atmospheric loss"),
            (self.depoint_db, "depointing loss"),
        ] {
            if v < 0.0 {
                return Err(ChannelError::NegativeLoss(name));
            }
        }
        Ok(())
    }

    /// SNR per carrier-Watt in dB at relative pattern gain `rel` (1 at
    /// boresight) over a carrier of `carrier_bw_hz`.
    pub fn gamma_db(&self, rel: f64, carrier_bw_hz: f64) -> f64 {
        self.g_max_dbi + 10.0 * rel.log10() - self.fsl_db - self.atm_db - self.depoint_db
            + self.g_over_t_db
            - self.boltzmann_db
            - 10.0 * carrier_bw_hz.log10()
            + self.calibration_offset_db
    }

    pub fn gamma(&self, rel: f64, carrier_bw_hz: f64) -> f64 {
        10f64.powf(self.gamma_db(rel, carrier_bw_hz) / 10.0)
    }

    /// Boresight SNR in dB for carrier power `p_carrier`.
    pub fn boresight_snr_db(&self, p_carrier: f64, carrier_bw_hz: f64) -> f64 {
        self.gamma_db(1.0, carrier_bw_hz) + 10.0 * p_carrier.log10()
    }

    /// The same budget with its offset chosen so the boresight SNR at
    /// `p_carrier` equals `target_db`.
    pub fn calibrated(mut self, target_db: f64, p_carrier: f64, carrier_bw_hz: f64) -> Self {
        self.calibration_offset_db = 0.0;
        self.calibration_offset_db = target_db - self.boresight_snr_db(p_carrier, carrier_bw_hz);
        self
    }
}

/// Per-carrier power when `P_total` is spread evenly over `K * M` carriers.
pub fn uniform_carrier_power(p_total: f64, beams: usize, carriers: usize) -> f64 {
    p_total / (beams * carriers) as f64
}

/// Per-carrier power of two beams sharing an amplifier delivering `p_pa`:
/// every carrier of the pair gets the same power.
pub fn shared_hpa_carrier_power(p_pa: f64, m_a: usize, m_b: usize) -> Result<f64, ChannelError> {
    match m_a + m_b {
        0 => Err(ChannelError::NoCarriers),
        m => Ok(p_pa / m as f64),
    }
}

/// Payload-level constants shared by all allocators.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub layout: BeamLayout,
    pub budget: LinkBudget,
    /// Carriers per color, `M`; the band holds `2M` carriers.
    pub carriers: usize,
    pub total_bandwidth_hz: f64,
    pub total_power_w: f64,
    pub hpa_max_power_w: f64,
}

impl Payload {
    /// Six beams, 200 W, 133 W per amplifier, 500 MHz in 2 x 4 carriers, with
    /// the budget calibrated to a 15 dB boresight SNR under uniform power.
    pub fn reference() -> Self {
        let mut p = Self {
            layout: BeamLayout::new(6, 1.0).expect("valid layout"),
            budget: LinkBudget::default(),
            carriers: 4,
            total_bandwidth_hz: 500e6,
            total_power_w: 200.0,
            hpa_max_power_w: 133.0,
        };
        p.budget = p.budget.clone().calibrated(15.0, p.uniform_carrier_power(), p.carrier_bandwidth());
        p
    }

    pub fn beams(&self) -> usize {
        self.layout.beams()
    }

    /// `W~ = W / (2M)`.
    pub fn carrier_bandwidth(&self) -> f64 {
        self.total_bandwidth_hz / (2 * self.carriers) as f64
    }

    pub fn uniform_carrier_power(&self) -> f64 {
        uniform_carrier_power(self.total_power_w, self.beams(), self.carriers)
    }
}

/// Pattern gain at the on-axis point where the adjacent beam's C/I against the
/// co-channel beam two radii beyond the dominant boresight reaches the
/// threshold; closer to the dominant beam the adjacent signal is too weak to
/// serve.
pub fn adjacent_gain_floor() -> f64 {
    let ratio = 10f64.powf(MIN_CARRIER_TO_INTERFERENCE_DB / 10.0);
    let f = |d: f64| bessel_gain(d, 1.0) / bessel_gain(4.0 - d, 1.0) - ratio;
    let (mut lo, mut hi) = (1.0, 1.99);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    bessel_gain(0.5 * (lo + hi), 1.0)
}

/// Carrier-to-interference ratio of beam `s` at a point with relative gains
/// `gains`, against every other beam of the same color.
pub fn carrier_to_interference(layout: &BeamLayout, gains: &[f64], s: usize) -> f64 {
    let interference: f64 = (0..layout.beams())
        .filter(|&i| i != s && layout.color(i) == layout.color(s))
        .map(|i| gains[i])
        .sum();
    gains[s] / interference.max(f64::MIN_POSITIVE)
}

/// Strongest adjacent beam of `dominant` if it may serve a user with relative
/// gains `gains`.
pub fn eligible_adjacent(layout: &BeamLayout, gains: &[f64], dominant: usize, floor: f64) -> Option<usize> {
    let s = layout
        .neighbors(dominant)
        .fold(None, |best: Option<usize>, s| match best {
            Some(b) if gains[b] >= gains[s] => Some(b),
            _ => Some(s),
        })?;
    let ci_db = 10.0 * carrier_to_interference(layout, gains, s).log10();
    (ci_db >= MIN_CARRIER_TO_INTERFERENCE_DB && gains[s] >= floor).then_some(s)
}

#[derive(Debug, Clone)]
pub struct ChannelMap {
    beams: usize,
    gain: Vec<f64>,
    gamma: Vec<f64>,
    dominant: Vec<usize>,
    eligible: Vec<Vec<usize>>,
}

impl ChannelMap {
    pub fn num_users(&self) -> usize {
        self.dominant.len()
    }

    pub fn beams(&self) -> usize {
        self.beams
    }

    /// Relative pattern gain of beam `b` at user `n`.
    pub fn gain(&self, n: usize, b: usize) -> f64 {
        self.gain[n * self.beams + b]
    }

    /// SNR per carrier-Watt.
    pub fn gamma(&self, n: usize, b: usize) -> f64 {
        self.gamma[n * self.beams + b]
    }

    pub fn snr(&self, n: usize, b: usize, p_carrier: f64) -> f64 {
        p_carrier * self.gamma(n, b)
    }

    pub fn dominant(&self, n: usize) -> usize {
        self.dominant[n]
    }

    /// Beams allowed to serve `n`: the dominant beam first, then possibly one
    /// adjacent beam.
    pub fn eligible(&self, n: usize) -> &[usize] {
        &self.eligible[n]
    }

    pub fn is_eligible(&self, n: usize, b: usize) -> bool {
        self.eligible[n].contains(&b)
    }
}

pub fn build_channel(payload: &Payload, users: &[[f64; 2]]) -> Result<ChannelMap, ChannelError> {
    let layout = &payload.layout;
    payload.budget.validate()?;
    let k = layout.beams();
    let wc = payload.carrier_bandwidth();
    let floor = adjacent_gain_floor();
    let g0 = payload.budget.gamma(1.0, wc);
    let mut gain = Vec::with_capacity(users.len() * k);
    let mut dominant = Vec::with_capacity(users.len());
    let mut eligible = Vec::with_capacity(users.len());
    for (index, &pos) in users.iter().enumerate() {
        let dists: Vec<f64> = (0..k).map(|b| layout.distance(pos, b)).collect();
        if dists.iter().all(|&d| d > 1.0 + 1e-9) {
            return Err(ChannelError::OutsideFootprint { index, x: pos[0], y: pos[1] });
        }
        let row: Vec<f64> = dists.iter().map(|&d| bessel_gain(d, 1.0)).collect();
        let dom = (0..k).fold(0, |best, b| if row[b] > row[best] { b } else { best });
        let mut elig = vec![dom];
        elig.extend(eligible_adjacent(layout, &row, dom, floor));
        gain.extend_from_slice(&row);
        dominant.push(dom);
        eligible.push(elig);
    }
    let gamma = gain.iter().map(|&g| g0 * g).collect();
    Ok(ChannelMap { beams: k, gain, gamma, dominant, eligible })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_limit_and_decay() {
        assert!((bessel_gain(0.0, 3.0) - 3.0).abs() < 1e-12);
        assert!((bessel_gain(1e-6, 1.0) - 1.0).abs() < 1e-9);
        let half = bessel_gain(1.0, 1.0);
        assert!((half - 0.5).abs() < 0.01);
        let mut prev = bessel_gain(0.0, 1.0);
        for i in 1..=1000 {
            let g = bessel_gain(2.0 * i as f64 / 1000.0, 1.0);
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn layout_rules() {
        assert_eq!(BeamLayout::new(5, 1.0), Err(ChannelError::BeamCount(5)));
        assert_eq!(BeamLayout::new(0, 1.0), Err(ChannelError::BeamCount(0)));
        assert!(BeamLayout::new(2, 0.0).is_err());
        let l = BeamLayout::new(6, 1.0).unwrap();
        assert_eq!(l.hpa_pairs(), vec![(0, 1), (2, 3), (4, 5)]);
        assert_eq!(l.neighbors(0).collect::<Vec<_>>(), vec![1]);
        assert_eq!(l.neighbors(3).collect::<Vec<_>>(), vec![2, 4]);
        assert_eq!(l.partner(3), 2);
        for b in 0..5 {
            assert_eq!(l.boresight(b + 1)[0] - l.boresight(b)[0], 2.0);
        }
    }

    #[test]
    fn carrier_powers() {
        assert!((uniform_carrier_power(200.0, 6, 4) - 8.333_333).abs() < 1e-5);
        assert_eq!(uniform_carrier_power(7.0, 1, 1), 7.0);
        assert_eq!(uniform_carrier_power(0.0, 6, 4), 0.0);
        assert_eq!(shared_hpa_carrier_power(133.0, 4, 4).unwrap(), 16.625);
        assert_eq!(shared_hpa_carrier_power(80.0, 8, 0).unwrap(), 10.0);
        assert_eq!(shared_hpa_carrier_power(1.0, 0, 0), Err(ChannelError::NoCarriers));
    }

    #[test]
    fn raw_budget_is_about_two_db_above_target() {
        let p = Payload::reference();
        let raw = LinkBudget { calibration_offset_db: 0.0, ..p.budget.clone() };
        let snr = raw.boresight_snr_db(p.uniform_carrier_power(), p.carrier_bandwidth());
        assert!((snr - 17.2).abs() < 0.1, "{snr}");
        let cal = p.budget.boresight_snr_db(p.uniform_carrier_power(), p.carrier_bandwidth());
        assert!((cal - 15.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_users_outside() {
        let p = Payload::reference();
        let err = build_channel(&p, &[[0.0, 0.0], [1.0, 0.9]]).unwrap_err();
        assert!(matches!(err, ChannelError::OutsideFootprint { index: 1, .. }));
    }

    #[test]
    fn boresight_user_has_dominant_only() {
        let p = Payload::reference();
        let ch = build_channel(&p, &[[4.0, 0.0], [4.9, 0.0]]).unwrap();
        assert_eq!(ch.dominant(0), 2);
        assert_eq!(ch.eligible(0), &[2]);
        assert_eq!(ch.eligible(1), &[2, 3]);
        for b in 0..6 {
            assert!(ch.gamma(0, 2) >= ch.gamma(0, b));
        }
    }

    #[test]
    fn ci_is_scale_free() {
        let l = BeamLayout::new(6, 1.0).unwrap();
        let g: Vec<f64> = (0..6).map(|b| bessel_gain(l.distance([4.7, 0.3], b), 1.0)).collect();
        let g2: Vec<f64> = g.iter().map(|v| v * 123.0).collect();
        let a = carrier_to_interference(&l, &g, 3);
        let b = carrier_to_interference(&l, &g2, 3);
        assert!((a - b).abs() <= 1e-12 * a);
    }
}
