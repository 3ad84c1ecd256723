//! Refined-GLLP analytic key rates with the Bloch-sphere phase-error inflation
//! caused by a Trojan-horse leak.

use crate::error::{Error, Result};
use crate::tha::{delta_bloch, delta_bloch_mdi};

/// `h₂(x)` for `x ∈ [0, 1]`, zero at both endpoints.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("binary entropy argument {x} outside [0, 1]")));
    }
    Ok(h2(x))
}

/// `h₂` with the argument clamped into `[0, 1]`.
pub(crate) fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

/// Phase error after the leak:
/// `e + 4Δ′(1−Δ′)(1−2e) + 4(1−2Δ′)√(Δ′(1−Δ′)e(1−e))`, i.e. `sin²(asin√e + 2 asin√Δ′)`.
/// Both inputs and the result are clamped to `[0, ½]`.
pub fn ex_prime(e_x: f64, delta_prime: f64) -> f64 {
    let e = e_x.clamp(0.0, 0.5);
    let d = delta_prime.clamp(0.0, 0.5);
    let v = e + 4.0 * d * (1.0 - d) * (1.0 - 2.0 * e) + 4.0 * (1.0 - 2.0 * d) * (d * (1.0 - d) * e * (1.0 - e)).sqrt();
    v.clamp(0.0, 0.5)
}

/// `Δ / Y`, saturating at ½ when the yield bound vanishes.
fn delta_prime(delta: f64, y: f64) -> f64 {
    if y > 0.0 {
        (delta / y).min(0.5)
    } else {
        0.5
    }
}

/// `1 − h₂(e′_X) − h₂(e_Z)` for ideal single photons, floored at 0.
pub fn ideal_single_photon_rate(e_z: f64, e_x: f64, mu_out: f64, y: f64) -> f64 {
    let e_prime = ex_prime(e_x, delta_prime(delta_bloch(mu_out), y));
    (1.0 - h2(e_prime) - h2(e_z)).max(0.0)
}

/// Inputs shared by both protocols. For MDI, `p1`, `y1` and `e_x` are the
/// (1,1)-photon quantities and the gain and QBER are the Z×Z signal ones.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GllpInputs {
    /// Signal gain in the key basis.
    pub q_signal: f64,
    /// Signal QBER in the key basis.
    pub e_signal: f64,
    pub p1: f64,
    /// Single-photon yield in the key basis (lower bound).
    pub y1: f64,
    /// Yield entering `Δ′ = Δ/Y`.
    pub y_delta: f64,
    /// Single-photon X-basis error rate (upper bound).
    pub e_x: f64,
    pub p_z: f64,
    pub f_ec: f64,
}

impl GllpInputs {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("q_signal", self.q_signal),
            ("e_signal", self.e_signal),
            ("p1", self.p1),
            ("y1", self.y1),
            ("y_delta", self.y_delta),
            ("e_x", self.e_x),
            ("p_z", self.p_z),
        ];
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.f_ec >= 1.0) || !self.f_ec.is_finite() {
            return Err(Error::Validation(format!("error-correction efficiency must be ≥ 1, got {}", self.f_ec)));
        }
        Ok(())
    }

    fn rate(&self, delta: f64) -> f64 {
        let e_prime = ex_prime(self.e_x, delta_prime(delta, self.y_delta));
        let pz2 = self.p_z * self.p_z;
        let r = pz2 * self.p1 * self.y1 * (1.0 - h2(e_prime)) - pz2 * self.q_signal * self.f_ec * h2(self.e_signal);
        r.max(0.0)
    }
}

/// `p_Z² p₁ Y₁[1 − h₂(e′_X)] − p_Z² Q_μ f h₂(E_μ)`, floored at 0.
pub fn gllp_bb84_rate(inputs: &GllpInputs, mu_out: f64) -> Result<f64> {
    inputs.validate()?;
    check_leak(mu_out)?;
    Ok(inputs.rate(delta_bloch(mu_out)))
}

/// `p_Z² p₁₁ Y₁₁^Z[1 − h₂(e₁₁^X′)] − p_Z² Q_μμ^Z f h₂(E_μμ^Z)`, floored at 0.
pub fn gllp_mdi_rate(inputs: &GllpInputs, mu_out_a: f64, mu_out_b: f64) -> Result<f64> {
    inputs.validate()?;
    check_leak(mu_out_a)?;
    check_leak(mu_out_b)?;
    Ok(inputs.rate(delta_bloch_mdi(mu_out_a, mu_out_b)))
}

fn check_leak(mu_out: f64) -> Result<()> {
    if !(mu_out >= 0.0) || !mu_out.is_finite() {
        return Err(Error::Validation(format!("leaked intensity must be a finite non-negative number, got {mu_out}")));
    }
    Ok(())
}
