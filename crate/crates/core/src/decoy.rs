//! Decoy-state bounds: interval estimates of single-photon (BB84) and
//! (1,1)-photon (MDI) conditional outcome probabilities from multi-intensity
//! statistics, one certified LP per observable and direction.

use crate::channel::{mdi_is_error, DetectionStats};
use crate::error::{Error, Result};
use crate::lp::{lp_solve, LinearProgram, Sense};
use crate::protocol::Protocol;

pub const DEFAULT_CUTOFF: usize = 10;
/// Extra room on every decoy constraint so roundoff in the statistics cannot make the LP infeasible.
const STAT_SLACK: f64 = 1e-12;

/// `μⁿ e^{−μ} / n!`.
pub fn poisson_pn(mu: f64, n: usize) -> f64 {
    let mut p = (-mu).exp();
    for k in 1..=n {
        p *= mu / k as f64;
    }
    p
}

/// Poisson-mixture constraints for one family of yield variables.
/// Row `i` reads `Σ_v w[i][v] Y_v ≤ γ_i ≤ Σ_v w[i][v] Y_v + tail[i]`.
#[derive(Clone, Debug)]
pub struct DecoyProblem {
    pub weights: Vec<Vec<f64>>,
    pub tails: Vec<f64>,
    pub target: usize,
    pub labels: Vec<String>,
}

impl DecoyProblem {
    pub fn bb84(intensities: &[f64], cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        let weights: Vec<Vec<f64>> =
            intensities.iter().map(|&mu| (0..=cutoff).map(|n| poisson_pn(mu, n)).collect()).collect();
        let tails = weights.iter().map(|w| (1.0 - w.iter().sum::<f64>()).max(0.0)).collect();
        let labels = intensities.iter().map(|mu| format!("decoy constraint at intensity {mu}")).collect();
        Ok(Self { weights, tails, target: 1, labels })
    }

    pub fn mdi(intensities: &[f64], cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        let k = cutoff + 1;
        let mut weights = Vec::new();
        let mut tails = Vec::new();
        let mut labels = Vec::new();
        for &ma in intensities {
            for &mb in intensities {
                let pa: Vec<f64> = (0..k).map(|n| poisson_pn(ma, n)).collect();
                let pb: Vec<f64> = (0..k).map(|n| poisson_pn(mb, n)).collect();
                let mut w = vec![0.0; k * k];
                for n in 0..k {
                    for m in 0..k {
                        w[n * k + m] = pa[n] * pb[m];
                    }
                }
                let covered = pa.iter().sum::<f64>() * pb.iter().sum::<f64>();
                weights.push(w);
                tails.push((1.0 - covered).max(0.0));
                labels.push(format!("decoy constraint at intensity pair ({ma}, {mb})"));
            }
        }
        Ok(Self { weights, tails, target: k + 1, labels })
    }

    fn lp(&self, gammas: &[f64], sense: Sense) -> LinearProgram {
        let nvar = self.weights[0].len();
        let mut c = vec![0.0; nvar];
        c[self.target] = 1.0;
        let mut lp = LinearProgram::new(sense, c, vec![0.0; nvar], vec![1.0; nvar]);
        for (i, w) in self.weights.iter().enumerate() {
            lp.add_row(
                w.clone(),
                gammas[i] - self.tails[i] - STAT_SLACK,
                gammas[i] + STAT_SLACK,
                self.labels[i].clone(),
            );
        }
        lp
    }

    /// Certified bound on the target yield. The dual bound is returned, clamped to `[0, 1]`.
    pub fn bound(&self, gammas: &[f64], sense: Sense) -> Result<f64> {
        if gammas.len() != self.weights.len() {
            return Err(Error::DimensionMismatch { expected: self.weights.len(), got: gammas.len() });
        }
        let lp = self.lp(gammas, sense);
        let sol = lp_solve(&lp)?;
        let gap = (sol.dual_bound - sol.primal_value).abs();
        if !sol.dual_bound.is_finite() || gap > 1e-8 + 1e-6 * sol.primal_value.abs() {
            return Err(Error::Numerical(format!("decoy LP dual certificate off by {gap:.3e}")));
        }
        Ok(sol.dual_bound.clamp(0.0, 1.0))
    }

    pub fn interval(&self, gammas: &[f64]) -> Result<(f64, f64)> {
        let lo = self.bound(gammas, Sense::Minimize)?;
        let hi = self.bound(gammas, Sense::Maximize)?;
        Ok((lo, hi.max(lo)))
    }
}

fn check_cutoff(cutoff: usize) -> Result<()> {
    if cutoff < 1 {
        return Err(Error::Validation("photon-number cutoff must be at least 1".into()));
    }
    Ok(())
}

/// Interval bounds on every conditional single-photon outcome probability.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoyBounds {
    pub protocol: Protocol,
    pub cutoff: usize,
    /// `intervals[sent][outcome] = (lower, upper)`; sent is `4a + b` for MDI.
    pub intervals: Vec<Vec<(f64, f64)>>,
}

fn problem_for(stats: &DetectionStats, cutoff: usize) -> Result<DecoyProblem> {
    let mus = stats.intensities.as_array();
    match stats.protocol {
        Protocol::Bb84 => DecoyProblem::bb84(&mus, cutoff),
        Protocol::Mdi => DecoyProblem::mdi(&mus, cutoff),
    }
}

/// Per-intensity values of an arbitrary linear functional of the outcome tables.
fn gammas(stats: &DetectionStats, f: impl Fn(&[Vec<f64>]) -> f64) -> Vec<f64> {
    stats.tables.iter().map(|t| f(&t.rows)).collect()
}

pub fn decoy_bounds(stats: &DetectionStats, cutoff: usize) -> Result<DecoyBounds> {
    let problem = problem_for(stats, cutoff)?;
    let rows = stats.tables[0].rows.len();
    let cols = stats.tables[0].rows[0].len();
    let mut intervals = vec![vec![(0.0, 0.0); cols]; rows];
    for (s, row) in intervals.iter_mut().enumerate() {
        for (o, slot) in row.iter_mut().enumerate() {
            *slot = problem.interval(&gammas(stats, |t| t[s][o]))?;
        }
    }
    Ok(DecoyBounds { protocol: stats.protocol, cutoff, intervals })
}

/// Optimum of a single-photon observable of a BB84 table.
pub fn decoy_lp_bb84(stats: &DetectionStats, sent: usize, outcome: usize, cutoff: usize, sense: Sense) -> Result<f64> {
    if stats.protocol != Protocol::Bb84 {
        return Err(Error::Validation("BB84 decoy LP needs BB84 statistics".into()));
    }
    check_index(stats, sent, outcome)?;
    problem_for(stats, cutoff)?.bound(&gammas(stats, |t| t[sent][outcome]), sense)
}

/// Optimum of a (1,1)-photon observable of an MDI table; `sent = 4a + b`.
pub fn decoy_lp_mdi(stats: &DetectionStats, sent: usize, outcome: usize, cutoff: usize, sense: Sense) -> Result<f64> {
    if stats.protocol != Protocol::Mdi {
        return Err(Error::Validation("MDI decoy LP needs MDI statistics".into()));
    }
    check_index(stats, sent, outcome)?;
    problem_for(stats, cutoff)?.bound(&gammas(stats, |t| t[sent][outcome]), sense)
}

fn check_index(stats: &DetectionStats, sent: usize, outcome: usize) -> Result<()> {
    let t = &stats.tables[0].rows;
    if sent >= t.len() || outcome >= t[0].len() {
        return Err(Error::Validation(format!("observable ({sent}, {outcome}) out of range")));
    }
    Ok(())
}

/// Single-photon quantities consumed by the analytic baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinglePhotonEstimates {
    /// Lower bound on the matched-basis single-photon yield in Z (`Y₁^Z` or `Y₁₁^Z`).
    pub yield_z: f64,
    /// Lower bound on the matched-basis single-photon yield in X.
    pub yield_x: f64,
    /// Upper bound on the single-photon X-basis error rate, clamped to `[0, ½]`.
    pub error_x: f64,
}

pub fn single_photon_estimates(stats: &DetectionStats, p_z: f64, cutoff: usize) -> Result<SinglePhotonEstimates> {
    let problem = problem_for(stats, cutoff)?;
    let p_x = 1.0 - p_z;
    let (det_z, det_x, err_x) = match stats.protocol {
        Protocol::Bb84 => {
            let det_z = problem.bound(&gammas(stats, |t| 0.5 * (t[0][0] + t[0][1] + t[1][0] + t[1][1])), Sense::Minimize)?;
            let det_x = problem.bound(&gammas(stats, |t| 0.5 * (t[2][2] + t[2][3] + t[3][2] + t[3][3])), Sense::Minimize)?;
            let err_x = problem.bound(&gammas(stats, |t| 0.5 * (t[2][3] + t[3][2])), Sense::Maximize)?;
            (det_z / p_z, det_x / p_x, err_x / p_x)
        }
        Protocol::Mdi => {
            let avg = |basis: usize, pick: &dyn Fn(usize, usize, usize) -> bool| {
                gammas(stats, |t| {
                    let mut s = 0.0;
                    for a in 2 * basis..2 * basis + 2 {
                        for b in 2 * basis..2 * basis + 2 {
                            for k in 0..2 {
                                if pick(a, b, k) {
                                    s += 0.25 * t[4 * a + b][k];
                                }
                            }
                        }
                    }
                    s
                })
            };
            let det_z = problem.bound(&avg(0, &|_, _, _| true), Sense::Minimize)?;
            let det_x = problem.bound(&avg(1, &|_, _, _| true), Sense::Minimize)?;
            let err_x = problem.bound(&avg(1, &mdi_is_error), Sense::Maximize)?;
            (det_z, det_x, err_x)
        }
    };
    let error_x = if det_x > 0.0 { (err_x / det_x).clamp(0.0, 0.5) } else { 0.5 };
    Ok(SinglePhotonEstimates { yield_z: det_z, yield_x: det_x, error_x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{simulate_stats, ChannelParams, IntensitySet, StatsTable};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn poisson_examples() {
        assert_abs_diff_eq!(poisson_pn(0.7, 0), (-0.7f64).exp(), epsilon = 1e-16);
        assert_abs_diff_eq!(poisson_pn(0.5, 1), 0.30327, epsilon = 1e-5);
        for mu in [0.01, 0.3, 1.0] {
            let s: f64 = (0..=50).map(|n| poisson_pn(mu, n)).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
        assert_eq!(poisson_pn(0.0, 0), 1.0);
        assert_eq!(poisson_pn(0.0, 3), 0.0);
    }

    /// Outcome tables generated from explicit photon-number yields `y[n][outcome]` (n up to 40).
    fn synthetic_bb84(y: &[Vec<f64>], mus: [f64; 3]) -> DetectionStats {
        let tables = mus
            .iter()
            .map(|&mu| {
                let k = y[0].len();
                let mut row = vec![0.0; k];
                for (n, yn) in y.iter().enumerate() {
                    for o in 0..k {
                        row[o] += poisson_pn(mu, n) * yn[o];
                    }
                }
                StatsTable { intensity: (mu, None), rows: vec![row; 4] }
            })
            .collect();
        DetectionStats {
            protocol: Protocol::Bb84,
            intensities: IntensitySet::new(mus[0], mus[1], mus[2]).unwrap(),
            tables,
        }
    }

    fn random_distribution<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..k).map(|_| -rng.gen_range(1e-12f64..1.0).ln()).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn sandwich_holds_for_synthetic_yields() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let y: Vec<Vec<f64>> = (0..40).map(|_| random_distribution(&mut rng, 5)).collect();
            let mu = rng.gen_range(0.2..1.0);
            let stats = synthetic_bb84(&y, [mu, 0.02, 0.001]);
            let b = decoy_bounds(&stats, DEFAULT_CUTOFF).unwrap();
            let (mut lo_sum, mut hi_sum) = (0.0, 0.0);
            for o in 0..5 {
                let (lo, hi) = b.intervals[0][o];
                assert!(lo <= y[1][o] + 1e-10 && y[1][o] <= hi + 1e-10, "{lo} {} {hi}", y[1][o]);
                lo_sum += lo;
                hi_sum += hi;
            }
            assert!(lo_sum <= 1.0 + 1e-9 && hi_sum >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn smaller_cutoff_never_tightens() {
        let p = ChannelParams::new(30.0, 0.2, 0.125, 0.01, 1e-5).unwrap();
        let iset = IntensitySet::new(0.5, 0.02, 0.001).unwrap();
        let stats = simulate_stats(Protocol::Bb84, 0.5, &iset, &p).unwrap();
        let wide = decoy_bounds(&stats, 1).unwrap();
        let mid = decoy_bounds(&stats, 3).unwrap();
        let tight = decoy_bounds(&stats, 10).unwrap();
        for s in 0..4 {
            for o in 0..5 {
                let (a, b, c) = (wide.intervals[s][o], mid.intervals[s][o], tight.intervals[s][o]);
                assert!(a.0 <= b.0 + 1e-12 && b.0 <= c.0 + 1e-12);
                assert!(a.1 >= b.1 - 1e-12 && b.1 >= c.1 - 1e-12);
            }
        }
    }

    #[test]
    fn vacuum_outcome_limit() {
        // No dark counts: the ∅ bound approaches the true single-photon loss.
        let p = ChannelParams::new(10.0, 0.2, 0.5, 0.0, 0.0).unwrap();
        let iset = IntensitySet::new(0.5, 0.02, 1e-6).unwrap();
        let stats = simulate_stats(Protocol::Bb84, 0.5, &iset, &p).unwrap();
        let lo = decoy_lp_bb84(&stats, 0, 4, DEFAULT_CUTOFF, Sense::Minimize).unwrap();
        let hi = decoy_lp_bb84(&stats, 0, 4, DEFAULT_CUTOFF, Sense::Maximize).unwrap();
        let eta = p.transmittance();
        assert!(lo <= 1.0 - eta + 1e-9 && 1.0 - eta <= hi + 1e-9);
        assert!(hi - lo < 0.05, "interval [{lo}, {hi}]");
    }

    #[test]
    fn degenerate_statistics_do_not_crash() {
        let y: Vec<Vec<f64>> = (0..40).map(|_| vec![0.2; 5]).collect();
        let stats = synthetic_bb84(&y, [0.5, 0.02, 0.001]);
        let b = decoy_bounds(&stats, DEFAULT_CUTOFF).unwrap();
        assert!(b.intervals[0][0].0 <= 0.2 && b.intervals[0][0].1 >= 0.2);
        let mut bad = stats.clone();
        bad.tables[0].rows[0][0] = 0.9;
        bad.tables[1].rows[0][0] = 0.0;
        bad.tables[2].rows[0][0] = 0.9;
        match decoy_lp_bb84(&bad, 0, 0, DEFAULT_CUTOFF, Sense::Minimize) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("decoy constraint")),
            Ok(v) => assert!((0.0..=1.0).contains(&v)),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn mdi_bounds_symmetric_and_sound() {
        let p = ChannelParams::new(20.0, 0.2, 0.495, 0.02, 8e-8).unwrap();
        let iset = IntensitySet::new(0.3, 0.02, 0.001).unwrap();
        let stats = simulate_stats(Protocol::Mdi, 0.5, &iset, &p).unwrap();
        let b = decoy_bounds(&stats, 4).unwrap();
        for a in 0..4 {
            for bb in 0..4 {
                for k in 0..3 {
                    let x = b.intervals[4 * a + bb][k];
                    let y = b.intervals[4 * bb + a][k];
                    assert!((x.0 - y.0).abs() < 1e-9 && (x.1 - y.1).abs() < 1e-9);
                }
            }
        }
        let est = single_photon_estimates(&stats, 0.5, 4).unwrap();
        assert!(est.yield_z > 0.0 && est.yield_z < 1.0);
        assert!(est.error_x >= 0.0 && est.error_x <= 0.5);
        assert!(decoy_lp_mdi(&stats, 0, 0, 4, Sense::Minimize).is_ok());
        assert!(decoy_lp_bb84(&stats, 0, 0, 4, Sense::Minimize).is_err());
    }

    #[test]
    fn bb84_estimates_are_plausible() {
        let p = ChannelParams::new(20.0, 0.2, 0.125, 0.01, 1e-5).unwrap();
        let iset = IntensitySet::new(0.5, 0.02, 0.001).unwrap();
        let stats = simulate_stats(Protocol::Bb84, 0.5, &iset, &p).unwrap();
        let est = single_photon_estimates(&stats, 0.5, DEFAULT_CUTOFF).unwrap();
        let eta = p.transmittance();
        assert!(est.yield_z <= eta + 1e-3 && est.yield_z > 0.8 * eta, "{} vs {eta}", est.yield_z);
        assert!(est.error_x > 0.005 && est.error_x < 0.05, "{}", est.error_x);
    }
}
