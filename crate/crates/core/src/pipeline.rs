//! End-to-end key-rate computations: channel statistics → decoy bounds →
//! constraint assembly → certified solver and/or the GLLP baseline.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    bb84_z_gain_and_qber, mdi_z_gain_and_qber, simulate_bb84, simulate_mdi, ChannelParams, DetectionStats,
    IntensitySet, DEFAULT_LOSS_DB_PER_KM, DEFAULT_PHASE_POINTS,
};
use crate::decoy::{decoy_bounds, poisson_pn, single_photon_estimates, DecoyBounds, DEFAULT_CUTOFF};
use crate::error::{Error, Result};
use crate::gllp::{gllp_bb84_rate, gllp_mdi_rate, h2, ideal_single_photon_rate, GllpInputs};
use crate::linalg::{eig_matrix, tensor, ComplexMatrix, DensityOperator, HermitianOperator};
use crate::protocol::{build_bb84, build_mdi, GZMaps, KeyBases, Protocol, ProtocolSpec};
use crate::solver::{solve_key_rate, ConstraintSet, SolverOptions, SolverReport, TraceRow};
use crate::tha::{register_state, tomography_constraint_values, ThaLeak};

/// Environment variable overriding the number of worker threads used by scans.
pub const WORKERS_ENV: &str = "TROJAN_KEYRATE_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Numerical,
    Gllp,
    Both,
}

impl Method {
    pub fn includes(self, m: Method) -> bool {
        self == Method::Both || self == m
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Numerical => "numerical",
            Method::Gllp => "gllp",
            Method::Both => "both",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "numerical" => Ok(Method::Numerical),
            "gllp" => Ok(Method::Gllp),
            "both" => Ok(Method::Both),
            other => Err(Error::Validation(format!("unknown method '{other}'"))),
        }
    }
}

/// Link and detector description; the distance is supplied per evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub loss_db_per_km: f64,
    pub eta_d: f64,
    pub e_d: f64,
    pub p_dark: f64,
}

impl ChannelSpec {
    pub fn at(&self, distance_km: f64) -> Result<ChannelParams> {
        ChannelParams::new(distance_km, self.loss_db_per_km, self.eta_d, self.e_d, self.p_dark)
    }
}

/// Coarse grid over the signal intensity, refined once around the best point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub refine_step: f64,
    pub refine_halfwidth: f64,
}

impl Default for MuGrid {
    fn default() -> Self {
        Self { start: 0.05, stop: 1.0, step: 0.05, refine_step: 0.01, refine_halfwidth: 0.04 }
    }
}

fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as i64;
    (0..=n.max(0)).map(|k| start + k as f64 * step).map(|v| (v * 1e12).round() / 1e12).collect()
}

impl MuGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0.0 && self.stop >= self.start && self.step > 0.0 && self.refine_step > 0.0 && self.refine_halfwidth >= 0.0) {
            return Err(Error::Validation(format!("invalid intensity grid {self:?}")));
        }
        Ok(())
    }

    pub fn coarse(&self) -> Vec<f64> {
        grid(self.start, self.stop, self.step)
    }

    pub fn refined(&self, center: f64) -> Vec<f64> {
        let lo = (center - self.refine_halfwidth).max(self.start);
        let hi = (center + self.refine_halfwidth).min(self.stop);
        grid(lo, hi, self.refine_step)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub method: Method,
    pub p_z: f64,
    pub f_ec: f64,
    pub channel: ChannelSpec,
    /// Bob's link for MDI; defaults to `channel`.
    pub channel_b: Option<ChannelSpec>,
    /// Decoy intensities; `mu_signal` is used as is unless `optimize_mu` is set.
    pub intensities: IntensitySet,
    pub optimize_mu: bool,
    pub mu_grid: MuGrid,
    pub mu_out: f64,
    /// Bob's leak for MDI; defaults to `mu_out`.
    pub mu_out_b: Option<f64>,
    pub decoy_cutoff: usize,
    /// Include the no-detection outcome among the decoy interval constraints.
    pub include_vacuum_outcome: bool,
    pub phase_points: usize,
    pub solver: SolverOptions,
    pub distances: Vec<f64>,
}

impl RunConfig {
    pub fn new(protocol: Protocol, channel: ChannelSpec, intensities: IntensitySet) -> Self {
        Self {
            protocol,
            method: Method::Both,
            p_z: 0.5,
            f_ec: 1.16,
            channel,
            channel_b: None,
            intensities,
            optimize_mu: false,
            mu_grid: MuGrid::default(),
            mu_out: 0.0,
            mu_out_b: None,
            decoy_cutoff: DEFAULT_CUTOFF,
            include_vacuum_outcome: true,
            phase_points: DEFAULT_PHASE_POINTS,
            solver: SolverOptions::default(),
            distances: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_z > 0.0 && self.p_z < 1.0) {
            return Err(Error::Validation(format!("p_Z must lie in (0, 1), got {}", self.p_z)));
        }
        if !(self.f_ec >= 1.0 && self.f_ec.is_finite()) {
            return Err(Error::Validation(format!("error-correction efficiency must be ≥ 1, got {}", self.f_ec)));
        }
        self.channel.at(0.0)?;
        if let Some(b) = &self.channel_b {
            b.at(0.0)?;
        }
        self.intensities.validate()?;
        self.mu_grid.validate()?;
        if self.optimize_mu && self.mu_grid.start <= self.intensities.nu1 {
            return Err(Error::Validation(format!(
                "intensity grid must start above nu1 = {}",
                self.intensities.nu1
            )));
        }
        ThaLeak::new(self.mu_out)?;
        if let Some(m) = self.mu_out_b {
            ThaLeak::new(m)?;
        }
        if self.decoy_cutoff < 1 {
            return Err(Error::Validation("photon-number cutoff must be at least 1".into()));
        }
        if self.phase_points == 0 {
            return Err(Error::Validation("phase discretization needs at least one point".into()));
        }
        for w in self.distances.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Validation("distance grid must be strictly increasing".into()));
            }
        }
        if self.distances.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(Error::Validation("distances must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn mu_out_b(&self) -> f64 {
        self.mu_out_b.unwrap_or(self.mu_out)
    }

    pub fn with_signal(&self, mu: f64) -> Result<Self> {
        let mut c = self.clone();
        c.intensities = IntensitySet::new(mu, self.intensities.nu1, self.intensities.nu2)?;
        Ok(c)
    }
}

/// One method's result at one distance.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyRateReport {
    pub distance_km: f64,
    pub method: Method,
    pub mu_signal: f64,
    /// `None` when the point could not be computed; see `status`.
    pub rate: Option<f64>,
    /// `p₁` (BB84) or `p₁₁` (MDI).
    pub p1: f64,
    pub p_pass: f64,
    pub leak_ec: f64,
    /// Certified single-photon term (numerical) or `p_Z² Y₁ [1 − h₂(e′_X)]` (GLLP).
    pub f_lower: Option<f64>,
    pub f_upper: Option<f64>,
    pub solver_gap: Option<f64>,
    pub iterations: Option<usize>,
    /// Numerical rate below the GLLP rate at the same point.
    pub below_gllp: bool,
    /// Every intensity on the optimization grid gave rate 0.
    pub all_zero: bool,
    pub stats_fingerprint: u64,
    pub status: String,
}

pub const STATUS_OK: &str = "ok";

/// `max(0, p₁·f − p_pass·leak)`.
pub fn assemble_rate(p1: f64, f_lower: f64, p_pass: f64, leak_ec: f64) -> f64 {
    (p1 * f_lower - p_pass * leak_ec).max(0.0)
}

/// Alice's (and Bob's) source-state probabilities `[p_Z/2, p_Z/2, p_X/2, p_X/2]`.
fn state_probabilities(p_z: f64) -> [f64; 4] {
    let p_x = 1.0 - p_z;
    [0.5 * p_z, 0.5 * p_z, 0.5 * p_x, 0.5 * p_x]
}

pub fn protocol_spec(protocol: Protocol, p_z: f64) -> Result<ProtocolSpec> {
    match protocol {
        Protocol::Bb84 => build_bb84(p_z),
        Protocol::Mdi => build_mdi(p_z),
    }
}

/// Channel statistics for the configured protocol at `distance_km` total length.
pub fn simulate(config: &RunConfig, distance_km: f64) -> Result<DetectionStats> {
    match config.protocol {
        Protocol::Bb84 => simulate_bb84(config.p_z, &config.intensities, &config.channel.at(distance_km)?),
        Protocol::Mdi => {
            let pa = config.channel.at(distance_km / 2.0)?;
            let pb = config.channel_b.unwrap_or(config.channel).at(distance_km / 2.0)?;
            simulate_mdi(&config.intensities, &pa, &pb, config.phase_points)
        }
    }
}

/// Base constraint set: state blocks, register tomography and, where the
/// register is rank deficient, its kernel.
pub fn tomography_constraints(spec: &ProtocolSpec, leak_a: f64, leak_b: f64) -> Result<(ConstraintSet, DensityOperator)> {
    let reg = register_state(spec, ThaLeak::new(leak_a)?, Some(ThaLeak::new(leak_b)?))?;
    let mut cs = ConstraintSet::new(spec.state_dims.clone())?.with_blocks(spec.state_blocks.clone())?;
    for (k, v) in tomography_constraint_values(&reg, spec)? {
        cs.add_equality(spec.tomography_ops[k].clone(), v, format!("tomography {k}"))?;
    }
    let eig = eig_matrix(reg.matrix());
    let rest = spec.dim() / reg.dim();
    let top = eig.values[0];
    for (i, &v) in eig.values.iter().enumerate() {
        if v <= 1e-12 * top {
            let col = eig.vectors.columns(i, 1).into_owned();
            let p = tensor(&(&col * col.adjoint()), &ComplexMatrix::identity(rest, rest));
            cs.add_zero_support(HermitianOperator::symmetrized(&p), format!("register kernel {i}"))?;
        }
    }
    Ok((cs, reg))
}

/// Adds `p_j [L, U]` (BB84) or `p_j p_i [L, U]` (MDI) for every bounded single-photon observable.
pub fn add_decoy_constraints(
    cs: &mut ConstraintSet,
    spec: &ProtocolSpec,
    bounds: &DecoyBounds,
    include_vacuum: bool,
) -> Result<()> {
    let probs = state_probabilities(spec.p_z);
    match spec.protocol {
        Protocol::Bb84 => {
            for j in 0..4 {
                for i in 0..5 {
                    if i == 4 && !include_vacuum {
                        continue;
                    }
                    let (lo, hi) = bounds.intervals[j][i];
                    cs.add_interval(spec.joint_outcome(j, i, None)?, probs[j] * lo, probs[j] * hi, format!("decoy P({j},{i})"))?;
                }
            }
        }
        Protocol::Mdi => {
            for j in 0..4 {
                for i in 0..4 {
                    for k in 0..3 {
                        if k == 2 && !include_vacuum {
                            continue;
                        }
                        let (lo, hi) = bounds.intervals[4 * j + i][k];
                        let w = probs[j] * probs[i];
                        cs.add_interval(spec.joint_outcome(j, i, Some(k))?, w * lo, w * hi, format!("decoy P({j},{i},{k})"))?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Signal-intensity quantities shared by both methods.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalTerms {
    pub p1: f64,
    pub q_signal: f64,
    pub e_signal: f64,
    pub p_pass: f64,
    pub leak_ec: f64,
}

pub fn signal_terms(config: &RunConfig, stats: &DetectionStats) -> SignalTerms {
    let mu = config.intensities.mu_signal;
    let (p1, (q, e)) = match config.protocol {
        Protocol::Bb84 => (poisson_pn(mu, 1), bb84_z_gain_and_qber(stats, config.p_z)),
        Protocol::Mdi => (poisson_pn(mu, 1) * poisson_pn(mu, 1), mdi_z_gain_and_qber(stats)),
    };
    SignalTerms {
        p1,
        q_signal: q,
        e_signal: e,
        p_pass: config.p_z * config.p_z * q,
        leak_ec: config.f_ec * h2(e),
    }
}

fn base_report(config: &RunConfig, distance_km: f64, method: Method, terms: &SignalTerms, fp: u64) -> KeyRateReport {
    KeyRateReport {
        distance_km,
        method,
        mu_signal: config.intensities.mu_signal,
        rate: None,
        p1: terms.p1,
        p_pass: terms.p_pass,
        leak_ec: terms.leak_ec,
        f_lower: None,
        f_upper: None,
        solver_gap: None,
        iterations: None,
        below_gllp: false,
        all_zero: false,
        stats_fingerprint: fp,
        status: STATUS_OK.into(),
    }
}

/// GLLP rate from precomputed statistics.
pub fn gllp_report(config: &RunConfig, distance_km: f64, stats: &DetectionStats) -> KeyRateReport {
    let terms = signal_terms(config, stats);
    let mut rep = base_report(config, distance_km, Method::Gllp, &terms, stats.fingerprint());
    let result = (|| -> Result<(f64, f64)> {
        let est = single_photon_estimates(stats, config.p_z, config.decoy_cutoff)?;
        let inputs = GllpInputs {
            q_signal: terms.q_signal.min(1.0),
            e_signal: terms.e_signal,
            p1: terms.p1,
            y1: est.yield_z.min(1.0),
            y_delta: est.yield_z.min(est.yield_x).min(1.0),
            e_x: est.error_x,
            p_z: config.p_z,
            f_ec: config.f_ec,
        };
        let rate = match config.protocol {
            Protocol::Bb84 => gllp_bb84_rate(&inputs, config.mu_out)?,
            Protocol::Mdi => gllp_mdi_rate(&inputs, config.mu_out, config.mu_out_b())?,
        };
        let privacy = if terms.p1 > 0.0 { (rate + terms.p_pass * terms.leak_ec) / terms.p1 } else { 0.0 };
        Ok((rate, if rate > 0.0 { privacy } else { f64::NAN }))
    })();
    match result {
        Ok((rate, privacy)) => {
            rep.rate = Some(rate);
            rep.f_lower = privacy.is_finite().then_some(privacy);
        }
        Err(e) => rep.status = e.to_string(),
    }
    rep
}

/// Solver report plus the rate it certifies.
#[derive(Clone, Debug)]
pub struct NumericalPoint {
    pub report: KeyRateReport,
    pub solver: Option<SolverReport>,
}

pub fn numerical_report(config: &RunConfig, distance_km: f64, stats: &DetectionStats) -> NumericalPoint {
    let terms = signal_terms(config, stats);
    let mut rep = base_report(config, distance_km, Method::Numerical, &terms, stats.fingerprint());
    let result = (|| -> Result<SolverReport> {
        let spec = protocol_spec(config.protocol, config.p_z)?;
        let bounds = decoy_bounds(stats, config.decoy_cutoff)?;
        let leak_b = match config.protocol {
            Protocol::Bb84 => config.mu_out,
            Protocol::Mdi => config.mu_out_b(),
        };
        let (mut cs, _) = tomography_constraints(&spec, config.mu_out, leak_b)?;
        add_decoy_constraints(&mut cs, &spec, &bounds, config.include_vacuum_outcome)?;
        let maps = GZMaps::new(&spec, KeyBases::ZOnly)?;
        solve_key_rate(&maps, &cs, &config.solver)
    })();
    match result {
        Ok(sr) => {
            rep.f_lower = Some(sr.f_lower_certified);
            rep.f_upper = Some(sr.f_upper);
            rep.solver_gap = Some(sr.gap);
            rep.iterations = Some(sr.iterations);
            rep.rate = Some(assemble_rate(terms.p1, sr.f_lower_certified, terms.p_pass, terms.leak_ec));
            NumericalPoint { report: rep, solver: Some(sr) }
        }
        Err(e) => {
            rep.status = e.to_string();
            NumericalPoint { report: rep, solver: None }
        }
    }
}

/// Evaluates `eval` over the coarse grid and once more around the best point.
/// Ties go to the smaller intensity. Returns the best report and whether every rate was 0.
pub fn optimize_over_grid(
    grid: &MuGrid,
    mut eval: impl FnMut(f64) -> KeyRateReport,
) -> Result<(KeyRateReport, bool)> {
    let mut best: Option<KeyRateReport> = None;
    let mut first_ok: Option<KeyRateReport> = None;
    let mut last_err: Option<KeyRateReport> = None;
    let mut any_positive = false;
    let mut consider = |r: KeyRateReport, best: &mut Option<KeyRateReport>| match r.rate {
        Some(v) => {
            if first_ok.as_ref().is_none_or(|f| r.mu_signal < f.mu_signal) {
                first_ok = Some(r.clone());
            }
            if v > 0.0 {
                any_positive = true;
            }
            let better = match best {
                None => true,
                Some(b) => v > b.rate.unwrap() || (v == b.rate.unwrap() && r.mu_signal < b.mu_signal),
            };
            if better {
                *best = Some(r);
            }
        }
        None => last_err = Some(r),
    };
    for mu in grid.coarse() {
        consider(eval(mu), &mut best);
    }
    if let Some(center) = best.as_ref().filter(|b| b.rate.unwrap() > 0.0).map(|b| b.mu_signal) {
        for mu in grid.refined(center) {
            consider(eval(mu), &mut best);
        }
    }
    if !any_positive {
        if let Some(mut r) = first_ok {
            r.all_zero = true;
            return Ok((r, true));
        }
    }
    match best {
        Some(b) => Ok((b, false)),
        None => match last_err {
            Some(r) => Err(Error::Numerical(format!("no intensity on the grid could be evaluated: {}", r.status))),
            None => Err(Error::Validation("empty intensity grid".into())),
        },
    }
}

/// Best signal intensity and its rate for one method at one distance.
pub fn optimize_signal_intensity(config: &RunConfig, distance_km: f64, method: Method) -> Result<(f64, KeyRateReport)> {
    if method == Method::Both {
        return Err(Error::Validation("optimize one method at a time".into()));
    }
    config.validate()?;
    let (rep, _) = optimize_over_grid(&config.mu_grid, |mu| {
        let eval = || -> Result<KeyRateReport> {
            let c = config.with_signal(mu)?;
            let stats = simulate(&c, distance_km)?;
            Ok(match method {
                Method::Gllp => gllp_report(&c, distance_km, &stats),
                _ => numerical_report(&c, distance_km, &stats).report,
            })
        };
        eval().unwrap_or_else(|e| KeyRateReport {
            distance_km,
            method,
            mu_signal: mu,
            rate: None,
            p1: 0.0,
            p_pass: 0.0,
            leak_ec: 0.0,
            f_lower: None,
            f_upper: None,
            solver_gap: None,
            iterations: None,
            below_gllp: false,
            all_zero: false,
            stats_fingerprint: 0,
            status: e.to_string(),
        })
    })?;
    Ok((rep.mu_signal, rep))
}

fn flag_below_gllp(reports: &mut [KeyRateReport]) {
    let gllp = reports.iter().find(|r| r.method == Method::Gllp).and_then(|r| r.rate);
    if let Some(g) = gllp {
        for r in reports.iter_mut().filter(|r| r.method == Method::Numerical) {
            r.below_gllp = r.rate.is_some_and(|v| v < g);
        }
    }
}

/// Reports for every requested method at one distance.
pub fn compute_keyrate(config: &RunConfig, distance_km: f64) -> Result<Vec<KeyRateReport>> {
    config.validate()?;
    let mut out = Vec::new();
    if config.optimize_mu {
        for m in [Method::Gllp, Method::Numerical] {
            if config.method.includes(m) {
                out.push(optimize_signal_intensity(config, distance_km, m)?.1);
            }
        }
    } else {
        let stats = simulate(config, distance_km)?;
        if config.method.includes(Method::Gllp) {
            out.push(gllp_report(config, distance_km, &stats));
        }
        if config.method.includes(Method::Numerical) {
            out.push(numerical_report(config, distance_km, &stats).report);
        }
    }
    flag_below_gllp(&mut out);
    Ok(out)
}

/// Like [`compute_keyrate`] at a fixed signal intensity, also returning the solver iteration trace.
pub fn compute_keyrate_traced(config: &RunConfig, distance_km: f64) -> Result<(Vec<KeyRateReport>, Vec<TraceRow>)> {
    config.validate()?;
    let stats = simulate(config, distance_km)?;
    let mut out = Vec::new();
    let mut trace = Vec::new();
    if config.method.includes(Method::Gllp) {
        out.push(gllp_report(config, distance_km, &stats));
    }
    if config.method.includes(Method::Numerical) {
        let mut c = config.clone();
        c.solver.record_trace = true;
        let p = numerical_report(&c, distance_km, &stats);
        if let Some(s) = p.solver {
            trace = s.trace;
        }
        out.push(p.report);
    }
    flag_below_gllp(&mut out);
    Ok((out, trace))
}

/// Runs `f` on a pool sized by [`WORKERS_ENV`] when set, otherwise on rayon's global pool.
pub fn with_worker_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Validation(format!("{WORKERS_ENV} must be a positive integer, got '{v}'")))?;
            if n == 0 {
                return Err(Error::Validation(format!("{WORKERS_ENV} must be positive")));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

/// One entry per distance and method, ordered by distance. Per-point failures
/// are recorded in the report status and do not stop the scan.
pub fn scan_distance(config: &RunConfig) -> Result<Vec<KeyRateReport>> {
    config.validate()?;
    if config.distances.is_empty() {
        return Err(Error::Validation("distance grid is empty".into()));
    }
    let per_point: Vec<Vec<KeyRateReport>> = with_worker_pool(|| {
        config
            .distances
            .par_iter()
            .map(|&d| {
                compute_keyrate(config, d).unwrap_or_else(|e| {
                    [Method::Gllp, Method::Numerical]
                        .into_iter()
                        .filter(|m| config.method.includes(*m))
                        .map(|m| KeyRateReport {
                            distance_km: d,
                            method: m,
                            mu_signal: config.intensities.mu_signal,
                            rate: None,
                            p1: 0.0,
                            p_pass: 0.0,
                            leak_ec: 0.0,
                            f_lower: None,
                            f_upper: None,
                            solver_gap: None,
                            iterations: None,
                            below_gllp: false,
                            all_zero: false,
                            stats_fingerprint: 0,
                            status: e.to_string(),
                        })
                        .collect()
                })
            })
            .collect()
    })?;
    Ok(per_point.into_iter().flatten().collect())
}

/// Largest distance with a positive rate: scans `[0, max_km]` at `step_km`, then
/// bisects the first sign change down to `resolution_km`. Returns 0 when the
/// rate already vanishes at the start of the scan.
pub fn zero_rate_distance(
    config: &RunConfig,
    method: Method,
    max_km: f64,
    step_km: f64,
    resolution_km: f64,
) -> Result<f64> {
    if method == Method::Both {
        return Err(Error::Validation("zero-rate distance needs a single method".into()));
    }
    if !(step_km > 0.0 && resolution_km > 0.0 && max_km > 0.0) {
        return Err(Error::Validation("zero-rate search needs positive step, resolution and range".into()));
    }
    let mut c = config.clone();
    c.method = method;
    let rate_at = |d: f64| -> Result<f64> {
        let reps = compute_keyrate(&c, d)?;
        let r = reps.into_iter().find(|r| r.method == method).expect("requested method is reported");
        r.rate.ok_or_else(|| Error::Numerical(format!("rate unavailable at {d} km: {}", r.status)))
    };
    let grid = grid(0.0, max_km, step_km);
    let mut last_pos: Option<f64> = None;
    let mut first_zero: Option<f64> = None;
    for d in grid {
        if rate_at(d)? > 0.0 {
            last_pos = Some(d);
        } else {
            first_zero = Some(d);
            break;
        }
    }
    let (mut lo, mut hi) = match (last_pos, first_zero) {
        (None, _) => return Ok(0.0),
        (Some(p), None) => return Ok(p),
        (Some(p), Some(z)) => (p, z),
    };
    while hi - lo > resolution_km {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One point of the single-photon (no decoy, lossless) comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct SinglePhotonPoint {
    pub e: f64,
    pub mu_out: f64,
    /// `(f_lower − p_Z² h₂(e)) / p_Z²`.
    pub numerical_rate: Option<f64>,
    pub gllp_rate: f64,
    pub f_lower: Option<f64>,
    pub solver_gap: Option<f64>,
    pub status: String,
}

/// Exact single-photon statistics of a depolarizing channel with error `e`, as `[sent][outcome]`.
pub fn depolarizing_table(e: f64, p_z: f64) -> Vec<Vec<f64>> {
    let p_x = 1.0 - p_z;
    let weight = [p_z, p_z, p_x, p_x];
    (0..4)
        .map(|j| {
            (0..5)
                .map(|i| {
                    if i == 4 {
                        0.0
                    } else if i == j {
                        weight[i] * (1.0 - e)
                    } else if i / 2 == j / 2 {
                        weight[i] * e
                    } else {
                        weight[i] * 0.5
                    }
                })
                .collect()
        })
        .collect()
}

/// Normalized single-photon BB84 rate under depolarizing noise, numerical and GLLP.
pub fn single_photon_point(e: f64, mu_out: f64, p_z: f64, solver: &SolverOptions) -> SinglePhotonPoint {
    let gllp_rate = ideal_single_photon_rate(e, e, mu_out, 1.0);
    let result = (|| -> Result<SolverReport> {
        if !(0.0..=0.5).contains(&e) {
            return Err(Error::Validation(format!("error rate must lie in [0, 0.5], got {e}")));
        }
        let spec = build_bb84(p_z)?;
        let (mut cs, _) = tomography_constraints(&spec, mu_out, mu_out)?;
        let table = depolarizing_table(e, p_z);
        let probs = state_probabilities(p_z);
        for j in 0..4 {
            for i in 0..5 {
                let v = probs[j] * table[j][i];
                cs.add_interval(spec.joint_outcome(j, i, None)?, v, v, format!("P({j},{i})"))?;
            }
        }
        let maps = GZMaps::new(&spec, KeyBases::ZOnly)?;
        solve_key_rate(&maps, &cs, solver)
    })();
    let pz2 = p_z * p_z;
    match result {
        Ok(sr) => SinglePhotonPoint {
            e,
            mu_out,
            numerical_rate: Some(((sr.f_lower_certified - pz2 * h2(e)) / pz2).max(0.0)),
            gllp_rate,
            f_lower: Some(sr.f_lower_certified),
            solver_gap: Some(sr.gap),
            status: STATUS_OK.into(),
        },
        Err(err) => SinglePhotonPoint {
            e,
            mu_out,
            numerical_rate: None,
            gllp_rate,
            f_lower: None,
            solver_gap: None,
            status: err.to_string(),
        },
    }
}

pub fn single_photon_curve(e_grid: &[f64], mu_out: f64, p_z: f64, solver: &SolverOptions) -> Result<Vec<SinglePhotonPoint>> {
    if e_grid.is_empty() {
        return Err(Error::Validation("error-rate grid is empty".into()));
    }
    ThaLeak::new(mu_out)?;
    with_worker_pool(|| e_grid.par_iter().map(|&e| single_photon_point(e, mu_out, p_z, solver)).collect())
}

/// Reference BB84 parameter set (`table1-case1`).
pub fn table1_case1() -> RunConfig {
    let channel = ChannelSpec { loss_db_per_km: DEFAULT_LOSS_DB_PER_KM, eta_d: 0.125, e_d: 0.01, p_dark: 1e-5 };
    let mut c = RunConfig::new(Protocol::Bb84, channel, IntensitySet { mu_signal: 0.5, nu1: 0.02, nu2: 0.001 });
    c.f_ec = 1.2;
    c.distances = grid(0.0, 100.0, 5.0);
    c
}

/// Reference MDI parameter set (`table1-case2`).
pub fn table1_case2() -> RunConfig {
    // The misalignment is relative: Alice is aligned with Charlie and Bob's
    // polarization is rotated by θ with sin²θ = e_d.
    let bob = ChannelSpec { loss_db_per_km: DEFAULT_LOSS_DB_PER_KM, eta_d: 0.495, e_d: 0.02, p_dark: 8e-8 };
    let alice = ChannelSpec { e_d: 0.0, ..bob };
    let mut c = RunConfig::new(Protocol::Mdi, alice, IntensitySet { mu_signal: 0.3, nu1: 0.02, nu2: 0.001 });
    c.channel_b = Some(bob);
    c.f_ec = 1.16;
    c.distances = grid(0.0, 60.0, 5.0);
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = MuGrid::default();
        let coarse = g.coarse();
        assert_eq!(coarse.len(), 20);
        assert_eq!(coarse[0], 0.05);
        assert_eq!(*coarse.last().unwrap(), 1.0);
        let r = g.refined(0.05);
        assert_eq!(r, vec![0.05, 0.06, 0.07, 0.08, 0.09]);
        assert_eq!(g.refined(0.5).len(), 9);
    }

    #[test]
    fn rate_assembly_matches_components() {
        let mut c = table1_case1();
        c.method = Method::Both;
        let reps = compute_keyrate(&c, 10.0).unwrap();
        assert_eq!(reps.len(), 2);
        assert_eq!(reps[0].stats_fingerprint, reps[1].stats_fingerprint);
        for r in &reps {
            assert_eq!(r.status, STATUS_OK, "{r:?}");
            let f = r.f_lower.unwrap();
            let rebuilt = assemble_rate(r.p1, f, r.p_pass, r.leak_ec);
            match r.method {
                Method::Numerical => assert_eq!(r.rate.unwrap(), rebuilt),
                _ => assert!((r.rate.unwrap() - rebuilt).abs() <= 1e-15),
            }
        }
        let num = reps.iter().find(|r| r.method == Method::Numerical).unwrap();
        let gl = reps.iter().find(|r| r.method == Method::Gllp).unwrap();
        assert!(num.rate.unwrap() > 0.0 && gl.rate.unwrap() > 0.0);
        assert!(num.rate.unwrap() >= gl.rate.unwrap() - 1e-6, "{num:?}\n{gl:?}");
        assert!(num.f_lower.unwrap() <= num.f_upper.unwrap() + 1e-9);
    }

    #[test]
    fn all_zero_grid_returns_smallest_mu() {
        let g = MuGrid::default();
        let (r, all_zero) = optimize_over_grid(&g, |mu| KeyRateReport {
            distance_km: 0.0,
            method: Method::Gllp,
            mu_signal: mu,
            rate: Some(0.0),
            p1: 0.0,
            p_pass: 0.0,
            leak_ec: 0.0,
            f_lower: None,
            f_upper: None,
            solver_gap: None,
            iterations: None,
            below_gllp: false,
            all_zero: false,
            stats_fingerprint: 0,
            status: STATUS_OK.into(),
        })
        .unwrap();
        assert!(all_zero && r.all_zero);
        assert_eq!(r.mu_signal, 0.05);
    }

    #[test]
    fn interior_optimum_and_refinement() {
        let mut c = table1_case1();
        c.optimize_mu = true;
        c.method = Method::Gllp;
        let (mu, rep) = optimize_signal_intensity(&c, 0.0, Method::Gllp).unwrap();
        assert!(mu > 0.05 && mu < 1.0, "mu* = {mu}");
        // A finer grid never loses more than grid effects.
        let mut fine = c.clone();
        fine.mu_grid.step = 0.025;
        let (_, rep_f) = optimize_signal_intensity(&fine, 0.0, Method::Gllp).unwrap();
        assert!(rep_f.rate.unwrap() >= rep.rate.unwrap() - 1e-6);
    }

    #[test]
    fn validation_errors() {
        let mut c = table1_case1();
        c.distances = vec![];
        assert!(matches!(scan_distance(&c), Err(Error::Validation(_))));
        c.distances = vec![10.0, 5.0];
        assert!(matches!(scan_distance(&c), Err(Error::Validation(_))));
        c.distances = vec![5.0];
        c.method = Method::Gllp;
        assert_eq!(scan_distance(&c).unwrap().len(), 1);
        assert!(IntensitySet::new(0.5, 0.001, 0.02).is_err());
    }

    #[test]
    fn huge_leak_floors_both_methods() {
        let mut c = table1_case1();
        c.mu_out = 1.0;
        let reps = compute_keyrate(&c, 5.0).unwrap();
        for r in reps {
            assert_eq!(r.rate, Some(0.0), "{r:?}");
        }
    }
}
