//! Trojan-horse leakage: Eve's back-reflected coherent state carries the
//! encoding phase, which decoheres Alice's source-replacement register.

use crate::error::{Error, Result};
use crate::linalg::{c, ComplexMatrix, DensityOperator, HermitianOperator, C64};
use crate::protocol::{signal_kets, Protocol, ProtocolSpec};

/// Mean photon number of the back-reflected pulse (after isolation).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThaLeak {
    pub mu_out: f64,
}

impl ThaLeak {
    pub fn new(mu_out: f64) -> Result<Self> {
        if !(mu_out >= 0.0 && mu_out.is_finite()) {
            return Err(Error::Validation(format!("mu_out must be finite and >= 0, got {mu_out}")));
        }
        Ok(Self { mu_out })
    }

    pub fn none() -> Self {
        Self { mu_out: 0.0 }
    }
}

/// `⟨β|α⟩ = exp(−|α|²/2 − |β|²/2 + β̄α)`.
pub fn coherent_overlap(alpha: C64, beta: C64) -> C64 {
    (-(alpha.norm_sqr() + beta.norm_sqr()) / 2.0 + beta.conj() * alpha).exp()
}

#[derive(Clone, Debug)]
pub struct SourceEnsemble {
    pub labels: [&'static str; 4],
    pub probabilities: [f64; 4],
    pub signal_kets: [[C64; 2]; 4],
    pub leak_amplitudes: [C64; 4],
}

pub fn build_ensemble_bb84(p_z: f64, leak: ThaLeak) -> Result<SourceEnsemble> {
    if !(p_z > 0.0 && p_z < 1.0) {
        return Err(Error::Validation(format!("p_Z must lie in (0, 1), got {p_z}")));
    }
    let p_x = 1.0 - p_z;
    let a = leak.mu_out.sqrt();
    Ok(SourceEnsemble {
        labels: ["z+", "z-", "x+", "x-"],
        probabilities: [p_z / 2.0, p_z / 2.0, p_x / 2.0, p_x / 2.0],
        signal_kets: signal_kets(),
        leak_amplitudes: [c(a, 0.0), c(-a, 0.0), c(0.0, a), c(0.0, -a)],
    })
}

fn inner2(bra: &[C64; 2], ket: &[C64; 2]) -> C64 {
    bra[0].conj() * ket[0] + bra[1].conj() * ket[1]
}

/// `ρ_A = Tr_{A'E} |Φ⟩⟨Φ|` with `(ρ_A)_ij = √(p_i p_j) ⟨ψ_j|ψ_i⟩`.
pub fn reduced_register_state(ens: &SourceEnsemble) -> DensityOperator {
    let m = ComplexMatrix::from_fn(4, 4, |i, j| {
        let w = (ens.probabilities[i] * ens.probabilities[j]).sqrt();
        let sig = inner2(&ens.signal_kets[j], &ens.signal_kets[i]);
        let leak = coherent_overlap(ens.leak_amplitudes[i], ens.leak_amplitudes[j]);
        sig * leak * c(w, 0.0)
    });
    DensityOperator::with_dims(HermitianOperator::symmetrized(&m), vec![4])
        .expect("Gram matrix of a normalized ensemble is a density operator")
}

/// Register state constrained by tomography: `ρ_A` (BB84) or `ρ_A ⊗ ρ_B` (MDI).
pub fn register_state(
    spec: &ProtocolSpec,
    leak_a: ThaLeak,
    leak_b: Option<ThaLeak>,
) -> Result<DensityOperator> {
    let rho_a = reduced_register_state(&build_ensemble_bb84(spec.p_z, leak_a)?);
    match spec.protocol {
        Protocol::Bb84 => Ok(rho_a),
        Protocol::Mdi => {
            let leak_b = leak_b.unwrap_or(leak_a);
            let rho_b = reduced_register_state(&build_ensemble_bb84(spec.p_z, leak_b)?);
            Ok(rho_a.tensor(&rho_b))
        }
    }
}

/// `θ_j = Tr(Θ_j ρ_reg)` for each tomography observable of `spec`.
pub fn tomography_constraint_values(reg: &DensityOperator, spec: &ProtocolSpec) -> Result<Vec<(usize, f64)>> {
    let d = spec.register_dim();
    if reg.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: reg.dim() });
    }
    Ok(spec
        .tomography_register_ops
        .iter()
        .enumerate()
        .map(|(j, theta)| (j, theta.inner(reg.op())))
        .collect())
}

/// Leak-induced deviation of the single-photon state, `½[1 − e^{−μ} cos μ]`.
pub fn delta_bloch(mu_out: f64) -> f64 {
    0.5 * (1.0 - (-mu_out).exp() * mu_out.cos())
}

/// Two-sided leak, `½[1 − e^{−(μ_A+μ_B)} cos²(½(μ_A+μ_B))]`.
pub fn delta_bloch_mdi(mu_out_a: f64, mu_out_b: f64) -> f64 {
    let s = mu_out_a + mu_out_b;
    0.5 * (1.0 - (-s).exp() * (0.5 * s).cos().powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eig_hermitian;
    use crate::protocol::{build_bb84, build_mdi};
    use approx::assert_abs_diff_eq;

    #[test]
    fn overlap_examples() {
        let mu: f64 = 1e-3;
        let a = c(mu.sqrt(), 0.0);
        assert_abs_diff_eq!(coherent_overlap(a, a).re, 1.0, epsilon = 1e-15);
        let o = coherent_overlap(a, -a);
        assert_abs_diff_eq!(o.re, (-2e-3f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(o.re, 0.998002, epsilon = 1e-6);
        let o = coherent_overlap(a, c(0.0, mu.sqrt()));
        let expected = (-mu).exp() * c(mu.cos(), -mu.sin());
        assert_abs_diff_eq!((o - expected).norm(), 0.0, epsilon = 1e-15);
        assert!(coherent_overlap(c(0.3, 0.1), c(-0.2, 0.4)).norm() <= 1.0);
    }

    #[test]
    fn ensemble_signal_overlaps() {
        let ens = build_ensemble_bb84(0.5, ThaLeak::none()).unwrap();
        assert!(ens.leak_amplitudes.iter().all(|a| a.norm() == 0.0));
        let k = &ens.signal_kets;
        assert_abs_diff_eq!(inner2(&k[1], &k[0]).norm(), 0.0, epsilon = 1e-15);
        let x_z = inner2(&k[2], &k[0]);
        assert_abs_diff_eq!(x_z.re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(x_z.im, -0.5, epsilon = 1e-15);
        assert!(build_ensemble_bb84(1.0, ThaLeak::none()).is_err());
        assert!(ThaLeak::new(-1.0).is_err());
    }

    /// Pure-state Gram oracle written out entry by entry.
    fn gram_oracle(p_z: f64) -> ComplexMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let kets = [
            [c(s, 0.0), c(s, 0.0)],
            [c(s, 0.0), c(-s, 0.0)],
            [c(s, 0.0), c(0.0, s)],
            [c(s, 0.0), c(0.0, -s)],
        ];
        let p = [p_z / 2.0, p_z / 2.0, (1.0 - p_z) / 2.0, (1.0 - p_z) / 2.0];
        let mut g = ComplexMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                let mut ov = c(0.0, 0.0);
                for q in 0..2 {
                    ov += kets[j][q].conj() * kets[i][q];
                }
                g[(i, j)] = ov * (p[i] * p[j]).sqrt();
            }
        }
        g
    }

    #[test]
    fn no_leak_matches_pure_gram_oracle() {
        for p_z in [0.5, 0.3, 0.8] {
            let rho = reduced_register_state(&build_ensemble_bb84(p_z, ThaLeak::none()).unwrap());
            let diff = (rho.matrix() - gram_oracle(p_z)).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12);
        }
        let rho = reduced_register_state(&build_ensemble_bb84(0.5, ThaLeak::none()).unwrap());
        for i in 0..4 {
            assert_abs_diff_eq!(rho.matrix()[(i, i)].re, 0.25, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(rho.matrix()[(0, 2)].norm(), 0.25 * std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn register_state_properties() {
        let mut prev: Option<ComplexMatrix> = None;
        for mu in [0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0, 3.0, 10.0] {
            let rho = reduced_register_state(&build_ensemble_bb84(0.5, ThaLeak::new(mu).unwrap()).unwrap());
            assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);
            assert!(rho.op().min_eigenvalue() >= -1e-10);
            assert_eq!(rho.matrix()[(0, 1)].norm(), 0.0);
            if let Some(p) = &prev {
                if mu <= 1.0 {
                    for i in 0..4 {
                        for j in 0..4 {
                            assert!(rho.matrix()[(i, j)].norm() <= p[(i, j)].norm() + 1e-15);
                        }
                    }
                }
            }
            prev = Some(rho.matrix().clone());
        }
        let rho = reduced_register_state(&build_ensemble_bb84(0.5, ThaLeak::new(1e3).unwrap()).unwrap());
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(rho.matrix()[(i, j)].norm() < 1e-300);
                }
            }
        }
    }

    #[test]
    fn phase_sign_convention_only_conjugates_register() {
        // Encoding phase and leak phase flipped together.
        let mut ens = build_ensemble_bb84(0.7, ThaLeak::new(1e-2).unwrap()).unwrap();
        let rho = reduced_register_state(&ens);
        for a in ens.leak_amplitudes.iter_mut() {
            *a = a.conj();
        }
        for k in ens.signal_kets.iter_mut() {
            k[1] = k[1].conj();
        }
        let flipped = reduced_register_state(&ens);
        assert_abs_diff_eq!((flipped.matrix() - rho.matrix().conjugate()).norm(), 0.0, epsilon = 1e-15);
        let (e1, e2) = (eig_hermitian(rho.op()).values, eig_hermitian(flipped.op()).values);
        for (x, y) in e1.iter().zip(&e2) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn tomography_values() {
        let spec = build_bb84(0.5).unwrap();
        let mu = 1e-3;
        let reg = register_state(&spec, ThaLeak::new(mu).unwrap(), None).unwrap();
        let vals = tomography_constraint_values(&reg, &spec).unwrap();
        assert_eq!(vals.len(), 16);
        // Reconstruct ρ_A from the values in the orthonormal Hermitian basis.
        let mut rec = HermitianOperator::zeros(4);
        for &(j, v) in &vals {
            rec = rec.add(&spec.tomography_register_ops[j].scale(v));
        }
        let diff = (rec.matrix() - reg.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-14);
        assert_abs_diff_eq!(reg.matrix()[(0, 0)].re, 0.25, epsilon = 1e-15);
        // (z+, x+) entry: (1/4)·⟨x+|z+⟩·⟨+i√μ|√μ⟩.
        let expected = c(0.25, 0.0) * c(0.5, -0.5) * (c(-mu, -mu)).exp();
        assert_abs_diff_eq!((reg.matrix()[(0, 2)] - expected).norm(), 0.0, epsilon = 1e-15);

        let mdi = build_mdi(0.5).unwrap();
        let reg = register_state(&mdi, ThaLeak::new(mu).unwrap(), None).unwrap();
        assert_eq!(tomography_constraint_values(&reg, &mdi).unwrap().len(), 256);
        assert!(tomography_constraint_values(&reg, &spec).is_err());
        assert!(eig_hermitian(reg.op()).values.iter().all(|&v| v > -1e-12));
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_bloch(0.0), 0.0);
        assert_abs_diff_eq!(delta_bloch(1e-3), 4.998e-4, epsilon = 1e-6);
        let big = delta_bloch(50.0);
        assert!((big - 0.5 * (1.0 - (-50f64).exp() * 50f64.cos())).abs() < 1e-20);
        let mut last = 0.0;
        for k in 0..=100 {
            let d = delta_bloch(k as f64 / 100.0);
            assert!(d >= last && (0.0..=1.0).contains(&d));
            last = d;
        }
        assert_eq!(delta_bloch_mdi(0.0, 0.0), 0.0);
        let s: f64 = 2e-3;
        assert_abs_diff_eq!(
            delta_bloch_mdi(1e-3, 1e-3),
            0.5 * (1.0 - (-s).exp() * (s / 2.0).cos() * (s / 2.0).cos()),
            epsilon = 1e-18
        );
        assert_eq!(delta_bloch_mdi(1e-3, 2e-3), delta_bloch_mdi(2e-3, 1e-3));
    }
}
