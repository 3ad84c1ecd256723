//! Weak-coherent-pulse channel simulation: loss, misalignment, dark counts,
//! 16 threshold-detector click patterns and the deletion (squashing) maps.

use std::f64::consts::{FRAC_PI_4, PI};
use std::hash::{Hash, Hasher};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::protocol::Protocol;

pub const BB84_STATES: [&str; 4] = ["Z+", "Z-", "X+", "X-"];
pub const BB84_OUTCOMES: [&str; 5] = ["H", "V", "+", "-", "none"];
pub const MDI_OUTCOMES: [&str; 3] = ["psi-", "psi+", "none"];
pub const DEFAULT_LOSS_DB_PER_KM: f64 = 0.2;
pub const DEFAULT_PHASE_POINTS: usize = 64;

/// One fibre link with its detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelParams {
    pub distance_km: f64,
    pub loss_db_per_km: f64,
    pub eta_d: f64,
    /// Misalignment angle; the intrinsic error rate is `e_d = sin²θ`.
    pub theta: f64,
    pub p_dark: f64,
}

impl ChannelParams {
    pub fn new(distance_km: f64, loss_db_per_km: f64, eta_d: f64, e_d: f64, p_dark: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&e_d) {
            return Err(Error::Validation(format!("misalignment e_d must lie in [0, 0.5], got {e_d}")));
        }
        let p = Self { distance_km, loss_db_per_km, eta_d, theta: e_d.sqrt().asin(), p_dark };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance_km >= 0.0 && self.distance_km.is_finite()) {
            return Err(Error::Validation(format!("distance must be >= 0, got {}", self.distance_km)));
        }
        if !(self.loss_db_per_km > 0.0 && self.loss_db_per_km.is_finite()) {
            return Err(Error::Validation(format!("loss must be > 0 dB/km, got {}", self.loss_db_per_km)));
        }
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return Err(Error::Validation(format!("detector efficiency must lie in (0, 1], got {}", self.eta_d)));
        }
        if !(0.0..1.0).contains(&self.p_dark) {
            return Err(Error::Validation(format!("dark-count probability must lie in [0, 1), got {}", self.p_dark)));
        }
        if !self.theta.is_finite() {
            return Err(Error::Validation("misalignment angle must be finite".into()));
        }
        Ok(())
    }

    pub fn e_d(&self) -> f64 {
        self.theta.sin().powi(2)
    }

    /// `η = η_d · 10^(−α L / 10)`.
    pub fn transmittance(&self) -> f64 {
        self.eta_d * 10f64.powf(-self.loss_db_per_km * self.distance_km / 10.0)
    }

    pub fn with_distance(&self, distance_km: f64) -> Self {
        Self { distance_km, ..*self }
    }
}

/// Signal plus two decoy intensities, `μ > ν₁ > ν₂ ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntensitySet {
    pub mu_signal: f64,
    pub nu1: f64,
    pub nu2: f64,
}

impl IntensitySet {
    pub fn new(mu_signal: f64, nu1: f64, nu2: f64) -> Result<Self> {
        let s = Self { mu_signal, nu1, nu2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_signal.is_finite() && self.mu_signal > self.nu1 && self.nu1 > self.nu2 && self.nu2 >= 0.0) {
            return Err(Error::Validation(format!(
                "intensities must satisfy mu > nu1 > nu2 >= 0, got mu={}, nu1={}, nu2={}",
                self.mu_signal, self.nu1, self.nu2
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.mu_signal, self.nu1, self.nu2]
    }
}

/// Conditional outcome table for one intensity (BB84) or intensity pair (MDI).
#[derive(Clone, Debug, PartialEq)]
pub struct StatsTable {
    pub intensity: (f64, Option<f64>),
    /// `rows[sent][outcome]`; sent is `4a + b` for MDI pairs.
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionStats {
    pub protocol: Protocol,
    pub intensities: IntensitySet,
    /// BB84: one table per intensity in `[μ, ν₁, ν₂]` order. MDI: `3·i_A + i_B`.
    pub tables: Vec<StatsTable>,
}

impl DetectionStats {
    pub fn table(&self, i_a: usize, i_b: Option<usize>) -> &StatsTable {
        match i_b {
            None => &self.tables[i_a],
            Some(b) => &self.tables[3 * i_a + b],
        }
    }

    pub fn outcome_labels(&self) -> &'static [&'static str] {
        match self.protocol {
            Protocol::Bb84 => &BB84_OUTCOMES,
            Protocol::Mdi => &MDI_OUTCOMES,
        }
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_defect(&self) -> f64 {
        self.tables
            .iter()
            .flat_map(|t| t.rows.iter())
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Stable fingerprint over every probability's bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.protocol.hash(&mut h);
        for t in &self.tables {
            t.intensity.0.to_bits().hash(&mut h);
            t.intensity.1.map(f64::to_bits).hash(&mut h);
            for r in &t.rows {
                for v in r {
                    v.to_bits().hash(&mut h);
                }
            }
        }
        h.finish()
    }
}

/// Amplitudes reaching Bob's `(H, V, +, −)` detectors before the `√(μη)` factor.
fn bb84_amplitude_table(p_z: f64, theta: f64) -> [[f64; 4]; 4] {
    let (sz, sx) = (p_z.sqrt(), (1.0 - p_z).sqrt());
    let a = FRAC_PI_4 - theta;
    let (ct, st, ca, sa) = (theta.cos(), theta.sin(), a.cos(), a.sin());
    [
        [sz * ct, sz * st, sx * ca, sx * sa],
        [-sz * st, sz * ct, sx * sa, -sx * ca],
        [sz * sa, sz * ca, sx * ct, -sx * st],
        [sz * ca, -sz * sa, sx * st, sx * ct],
    ]
}

pub fn bb84_detector_amplitudes(sent: usize, p_z: f64, params: &ChannelParams, mu: f64) -> Result<[f64; 4]> {
    if sent >= 4 {
        return Err(Error::Validation(format!("sent-state index {sent} out of range")));
    }
    let scale = (mu * params.transmittance()).sqrt();
    Ok(bb84_amplitude_table(p_z, params.theta)[sent].map(|x| x * scale))
}

/// `1 − (1 − p_d) e^{−|α|²}`.
pub fn click_probability(amplitude_sq: f64, p_dark: f64) -> f64 {
    p_dark - (1.0 - p_dark) * (-amplitude_sq).exp_m1()
}

/// Independent-detector pattern distribution. Pattern index is `b₁b₂b₃b₄`
/// read as a binary number with `b₁` the most significant bit.
pub fn pattern_distribution(clicks: [f64; 4]) -> [f64; 16] {
    let mut out = [0.0; 16];
    for (idx, slot) in out.iter_mut().enumerate() {
        let mut p = 1.0;
        for (j, &q) in clicks.iter().enumerate() {
            let bit = (idx >> (3 - j)) & 1;
            p *= if bit == 1 { q } else { 1.0 - q };
        }
        *slot = p;
    }
    out
}

/// BB84 deletion matrix: columns `H, V, +, −, ∅`, rows the 16 patterns.
pub fn bb84_deletion_matrix() -> [[f64; 5]; 16] {
    let m_h = [0., 0., 0., 0., 0., 0., 0., 0., 1., 0., 0., 0., 0.5, 0., 0., 0.];
    let m_v = [0., 0., 0., 0., 1., 0., 0., 0., 0., 0., 0., 0., 0.5, 0., 0., 0.];
    let m_p = [0., 0., 1., 0.5, 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.];
    let m_m = [0., 1., 0., 0.5, 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.];
    let m_0 = [1., 0., 0., 0., 0., 1., 1., 1., 0., 1., 1., 1., 0., 1., 1., 1.];
    let mut m = [[0.0; 5]; 16];
    for p in 0..16 {
        m[p] = [m_h[p], m_v[p], m_p[p], m_m[p], m_0[p]];
    }
    m
}

/// MDI deletion matrix: columns `Ψ⁻, Ψ⁺, ∅` for detector order `(3H, 3V, 4H, 4V)`.
pub fn mdi_deletion_matrix() -> [[f64; 3]; 16] {
    let m_minus = [0., 0., 0., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 0., 0., 0.];
    let m_plus = [0., 0., 0., 1., 0., 0., 0., 0., 0., 0., 0., 0., 1., 0., 0., 0.];
    let mut m = [[0.0; 3]; 16];
    for p in 0..16 {
        m[p] = [m_minus[p], m_plus[p], 1.0 - m_minus[p] - m_plus[p]];
    }
    m
}

fn squash<const K: usize>(raw: &[[f64; 16]], m: &[[f64; K]; 16]) -> Result<Vec<Vec<f64>>> {
    raw.iter()
        .enumerate()
        .map(|(i, row)| {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!("raw pattern row {i} sums to {s}, not 1")));
            }
            let mut out = vec![0.0; K];
            for (p, &v) in row.iter().enumerate() {
                for k in 0..K {
                    out[k] += v * m[p][k];
                }
            }
            Ok(out)
        })
        .collect()
}

pub fn squash_bb84(raw: &[[f64; 16]]) -> Result<Vec<Vec<f64>>> {
    squash(raw, &bb84_deletion_matrix())
}

pub fn squash_mdi(raw: &[[f64; 16]]) -> Result<Vec<Vec<f64>>> {
    squash(raw, &mdi_deletion_matrix())
}

/// Misaligned polarization `(h, v)` of an MDI source: `Z± = H/V`, `X± = (H ± V)/√2`.
fn mdi_polarization(sent: usize, theta: f64) -> (f64, f64) {
    let base = [0.0, PI / 2.0, FRAC_PI_4, -FRAC_PI_4][sent];
    let a = base + theta;
    (a.cos(), a.sin())
}

/// Amplitudes at Charlie's `(3H, 3V, 4H, 4V)` detectors after the 50:50 beam splitter.
#[allow(clippy::too_many_arguments)]
pub fn mdi_detector_amplitudes(
    sent_a: usize,
    sent_b: usize,
    phi: f64,
    params_a: &ChannelParams,
    params_b: &ChannelParams,
    mu_a: f64,
    mu_b: f64,
) -> Result<[Complex64; 4]> {
    if sent_a >= 4 || sent_b >= 4 {
        return Err(Error::Validation(format!("sent-state pair ({sent_a}, {sent_b}) out of range")));
    }
    let amp_a = (mu_a * params_a.transmittance() / 2.0).sqrt();
    let amp_b = (mu_b * params_b.transmittance() / 2.0).sqrt();
    let (ha, va) = mdi_polarization(sent_a, params_a.theta);
    let (hb, vb) = mdi_polarization(sent_b, params_b.theta);
    let i = Complex64::i();
    let e = Complex64::from_polar(1.0, phi);
    let mode = |x: f64, y: f64| {
        let a = Complex64::new(amp_a * x, 0.0);
        let b = e * (amp_b * y);
        (a + i * b, i * a + b)
    };
    let (d3h, d4h) = mode(ha, hb);
    let (d3v, d4v) = mode(va, vb);
    Ok([d3h, d3v, d4h, d4v])
}

fn bb84_table(p_z: f64, params: &ChannelParams, mu: f64) -> Result<Vec<Vec<f64>>> {
    let raw: Vec<[f64; 16]> = (0..4)
        .map(|s| {
            let amps = bb84_detector_amplitudes(s, p_z, params, mu)?;
            Ok(pattern_distribution(amps.map(|a| click_probability(a * a, params.p_dark))))
        })
        .collect::<Result<_>>()?;
    squash_bb84(&raw)
}

/// Pattern distribution averaged over `n_phase` equally spaced relative phases.
#[allow(clippy::too_many_arguments)]
pub fn mdi_pattern_average(
    sent_a: usize,
    sent_b: usize,
    params_a: &ChannelParams,
    params_b: &ChannelParams,
    mu_a: f64,
    mu_b: f64,
    n_phase: usize,
    phase_offset: f64,
) -> Result<[f64; 16]> {
    let mut acc = [0.0; 16];
    for k in 0..n_phase {
        let phi = phase_offset + 2.0 * PI * k as f64 / n_phase as f64;
        let amps = mdi_detector_amplitudes(sent_a, sent_b, phi, params_a, params_b, mu_a, mu_b)?;
        let pats = pattern_distribution(amps.map(|a| click_probability(a.norm_sqr(), params_a.p_dark)));
        for (s, p) in acc.iter_mut().zip(pats) {
            *s += p;
        }
    }
    Ok(acc.map(|s| s / n_phase as f64))
}

pub fn simulate_bb84(p_z: f64, intensities: &IntensitySet, params: &ChannelParams) -> Result<DetectionStats> {
    intensities.validate()?;
    params.validate()?;
    let tables = intensities
        .as_array()
        .iter()
        .map(|&mu| Ok(StatsTable { intensity: (mu, None), rows: bb84_table(p_z, params, mu)? }))
        .collect::<Result<_>>()?;
    Ok(DetectionStats { protocol: Protocol::Bb84, intensities: *intensities, tables })
}

/// MDI statistics with both parties using the same intensity set; the dark-count
/// probability of `params_a` applies to all four detectors at Charlie.
pub fn simulate_mdi(
    intensities: &IntensitySet,
    params_a: &ChannelParams,
    params_b: &ChannelParams,
    n_phase: usize,
) -> Result<DetectionStats> {
    intensities.validate()?;
    params_a.validate()?;
    params_b.validate()?;
    if n_phase == 0 {
        return Err(Error::Validation("phase discretization needs at least one point".into()));
    }
    let mus = intensities.as_array();
    let mut tables = Vec::with_capacity(9);
    for &mu_a in &mus {
        for &mu_b in &mus {
            let raw: Vec<[f64; 16]> = (0..16)
                .map(|s| mdi_pattern_average(s / 4, s % 4, params_a, params_b, mu_a, mu_b, n_phase, 0.0))
                .collect::<Result<_>>()?;
            tables.push(StatsTable { intensity: (mu_a, Some(mu_b)), rows: squash_mdi(&raw)? });
        }
    }
    Ok(DetectionStats { protocol: Protocol::Mdi, intensities: *intensities, tables })
}

/// Entry point covering both protocols. For MDI each party sits at half the
/// total distance carried by `params`.
pub fn simulate_stats(
    protocol: Protocol,
    p_z: f64,
    intensities: &IntensitySet,
    params: &ChannelParams,
) -> Result<DetectionStats> {
    match protocol {
        Protocol::Bb84 => simulate_bb84(p_z, intensities, params),
        Protocol::Mdi => {
            let half = params.with_distance(params.distance_km / 2.0);
            simulate_mdi(intensities, &half, &half, DEFAULT_PHASE_POINTS)
        }
    }
}

/// Sifted signal gain and QBER for BB84 Z basis: `(Q_μ, E_μ)` with `Q_μ` normalized per matched basis.
pub fn bb84_z_gain_and_qber(stats: &DetectionStats, p_z: f64) -> (f64, f64) {
    let t = &stats.tables[0].rows;
    let click = 0.5 * (t[0][0] + t[0][1] + t[1][0] + t[1][1]);
    let err = 0.5 * (t[0][1] + t[1][0]);
    (click / p_z, if click > 0.0 { err / click } else { 0.0 })
}

/// Whether Charlie's announcement `k` for the pair `(a, b)` is an error.
/// Z basis: any success from equal bits. X basis: `Ψ⁺` with unequal or `Ψ⁻` with equal bits.
pub fn mdi_is_error(a: usize, b: usize, k: usize) -> bool {
    match (a / 2, b / 2, k) {
        (_, _, 2) => false,
        (0, 0, _) => a == b,
        (1, 1, 0) => a == b,
        (1, 1, 1) => a != b,
        _ => false,
    }
}

/// Signal-signal Z-basis gain and QBER for MDI.
pub fn mdi_z_gain_and_qber(stats: &DetectionStats) -> (f64, f64) {
    let t = &stats.tables[0].rows;
    let mut click = 0.0;
    let mut err = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            for k in 0..2 {
                let p = 0.25 * t[4 * a + b][k];
                click += p;
                if mdi_is_error(a, b, k) {
                    err += p;
                }
            }
        }
    }
    (click, if click > 0.0 { err / click } else { 0.0 })
}
