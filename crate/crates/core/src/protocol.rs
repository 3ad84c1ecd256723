//! Operator content of the BB84 and MDI protocols and the key-rate objective
//! `f(ρ) = D(G(ρ) ‖ Z(G(ρ)))`.
//!
//! Register conventions:
//!
//! * BB84: `ρ_AB` on `A(4) ⊗ B(3)`. Alice's register `|0..3⟩` records which of
//!   `z+, z−, x+, x−` she sent. Bob's space is a qubit (`|0⟩, |1⟩` = the two
//!   interferometer arms) followed by a vacuum flag `|2⟩`.
//! * MDI: `ρ_ABC` on `A(4) ⊗ B(4) ⊗ C(3)` where C is Charlie's classical
//!   announcement (`Ψ⁻`, `Ψ⁺`, failure).
//!
//! G maps into `key(2) ⊗ A ⊗ B [⊗ C] ⊗ basis(2)`; key maps pinch the first factor.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    basis_ket, c, eig_matrix, eigenvalues, hermitian_basis, ket, projector, real_diag, symmetrize,
    tensor_all, von_neumann_entropy, ComplexMatrix, DensityOperator, HermitianOperator, C64,
    LOG_FLOOR,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Bb84,
    Mdi,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Bb84 => "bb84",
            Protocol::Mdi => "mdi",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bb84" => Ok(Protocol::Bb84),
            "mdi" => Ok(Protocol::Mdi),
            other => Err(Error::Validation(format!("unknown protocol '{other}'"))),
        }
    }
}

/// Which sifted bases contribute key. The rate pipeline uses only Z so that
/// the error-correction charge `p_Z² Q f h₂(E)` covers every key bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyBases {
    ZOnly,
    Both,
}

/// The four BB84 signal kets in the two-arm single-photon space `{|1⟩_L|0⟩_M, |0⟩_L|1⟩_M}`,
/// ordered `z+, z−, x+, x−`.
pub fn signal_kets() -> [[C64; 2]; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        [c(s, 0.0), c(s, 0.0)],
        [c(s, 0.0), c(-s, 0.0)],
        [c(s, 0.0), c(0.0, s)],
        [c(s, 0.0), c(0.0, -s)],
    ]
}

/// Every operator defining one protocol instance.
#[derive(Clone, Debug)]
pub struct ProtocolSpec {
    pub protocol: Protocol,
    pub p_z: f64,
    pub p_x: f64,
    pub dim_a: usize,
    pub dim_b: usize,
    pub dim_c: Option<usize>,
    pub povm_a: Vec<HermitianOperator>,
    pub povm_b: Vec<HermitianOperator>,
    pub povm_c: Vec<HermitianOperator>,
    /// Tomography observables on the source registers (`A` for BB84, `A ⊗ B` for MDI).
    pub tomography_register_ops: Vec<HermitianOperator>,
    /// The same observables lifted to the full state space.
    pub tomography_ops: Vec<HermitianOperator>,
    /// `[K_Z, K_X]`.
    pub kraus_ops: Vec<ComplexMatrix>,
    /// Key-register projectors `[Z₁, Z₂]` on the output space of G.
    pub key_maps: Vec<HermitianOperator>,
    pub state_dims: Vec<usize>,
    pub output_dims: Vec<usize>,
    /// Partition of the state basis that every constraint and Kraus operator respects.
    pub state_blocks: Vec<Vec<usize>>,
}

fn check_probability(p_z: f64) -> Result<()> {
    if !(p_z > 0.0 && p_z < 1.0) {
        return Err(Error::Validation(format!("p_Z must lie in (0, 1), got {p_z}")));
    }
    Ok(())
}

fn diag_projector(dim: usize, on: &[usize]) -> ComplexMatrix {
    let mut v = vec![0.0; dim];
    for &i in on {
        v[i] = 1.0;
    }
    real_diag(&v)
}

/// `Σ_a |a⟩_key ⊗ |sent_a⟩⟨sent_a|_A`, a `(2·4) × 4` isometry piece.
fn key_from_register(sent: [usize; 2]) -> ComplexMatrix {
    tensor_all(&[&basis_ket(2, 0), &diag_projector(4, &[sent[0]])])
        + tensor_all(&[&basis_ket(2, 1), &diag_projector(4, &[sent[1]])])
}

fn lift(ops: &[HermitianOperator], rest_dim: usize) -> Vec<HermitianOperator> {
    let id = HermitianOperator::identity(rest_dim);
    ops.iter().map(|o| o.tensor(&id)).collect()
}

fn key_maps(rest_dim: usize) -> Vec<HermitianOperator> {
    let id = ComplexMatrix::identity(rest_dim, rest_dim);
    (0..2)
        .map(|j| {
            HermitianOperator::symmetrized(&tensor_all(&[&projector(&basis_ket(2, j)), &id]))
        })
        .collect()
}

/// BB84 with passive basis choice at Bob.
pub fn build_bb84(p_z: f64) -> Result<ProtocolSpec> {
    check_probability(p_z)?;
    let p_x = 1.0 - p_z;
    let zero = c(0.0, 0.0);

    let povm_a = (0..4).map(|i| HermitianOperator::symmetrized(&projector(&basis_ket(4, i)))).collect();

    let weights = [p_z, p_z, p_x, p_x];
    let mut povm_b = Vec::with_capacity(5);
    for (k, w) in signal_kets().iter().zip(weights) {
        let v = ket(&[k[0], k[1], zero]);
        povm_b.push(HermitianOperator::symmetrized(&(projector(&v) * c(w, 0.0))));
    }
    let sum = povm_b.iter().fold(HermitianOperator::zeros(3), |acc, p| acc.add(p));
    povm_b.push(HermitianOperator::identity(3).sub(&sum));

    let tomography_register_ops = hermitian_basis(4);
    let tomography_ops = lift(&tomography_register_ops, 3);

    let qubit = diag_projector(3, &[0, 1]);
    let k_z = tensor_all(&[
        &key_from_register([0, 1]),
        &(&qubit * c(p_z.sqrt(), 0.0)),
        &basis_ket(2, 0),
    ]);
    let k_x = tensor_all(&[
        &key_from_register([2, 3]),
        &(&qubit * c(p_x.sqrt(), 0.0)),
        &basis_ket(2, 1),
    ]);

    Ok(ProtocolSpec {
        protocol: Protocol::Bb84,
        p_z,
        p_x,
        dim_a: 4,
        dim_b: 3,
        dim_c: None,
        povm_a,
        povm_b,
        povm_c: Vec::new(),
        tomography_register_ops,
        tomography_ops,
        kraus_ops: vec![k_z, k_x],
        key_maps: key_maps(4 * 3 * 2),
        state_dims: vec![4, 3],
        output_dims: vec![2, 4, 3, 2],
        state_blocks: vec![(0..12).collect()],
    })
}

/// MDI with Charlie's announcement held in a classical three-outcome register.
pub fn build_mdi(p_z: f64) -> Result<ProtocolSpec> {
    check_probability(p_z)?;
    let p_x = 1.0 - p_z;

    let reg_povm: Vec<HermitianOperator> =
        (0..4).map(|i| HermitianOperator::symmetrized(&projector(&basis_ket(4, i)))).collect();
    let mut povm_c: Vec<HermitianOperator> =
        (0..2).map(|k| HermitianOperator::symmetrized(&projector(&basis_ket(3, k)))).collect();
    let sum = povm_c[0].add(&povm_c[1]);
    povm_c.push(HermitianOperator::identity(3).sub(&sum));

    let tomography_register_ops = hermitian_basis(16);
    let tomography_ops = lift(&tomography_register_ops, 3);

    let success = diag_projector(3, &[0, 1]);
    let k_z = tensor_all(&[
        &key_from_register([0, 1]),
        &diag_projector(4, &[0, 1]),
        &success,
        &basis_ket(2, 0),
    ]);
    let k_x = tensor_all(&[
        &key_from_register([2, 3]),
        &diag_projector(4, &[2, 3]),
        &success,
        &basis_ket(2, 1),
    ]);

    let state_blocks = (0..3).map(|cc| (0..16).map(|ab| ab * 3 + cc).collect()).collect();

    Ok(ProtocolSpec {
        protocol: Protocol::Mdi,
        p_z,
        p_x,
        dim_a: 4,
        dim_b: 4,
        dim_c: Some(3),
        povm_a: reg_povm.clone(),
        povm_b: reg_povm,
        povm_c,
        tomography_register_ops,
        tomography_ops,
        kraus_ops: vec![k_z, k_x],
        key_maps: key_maps(4 * 4 * 3 * 2),
        state_dims: vec![4, 4, 3],
        output_dims: vec![2, 4, 4, 3, 2],
        state_blocks,
    })
}

impl ProtocolSpec {
    pub fn dim(&self) -> usize {
        self.state_dims.iter().product()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dims.iter().product()
    }

    /// Dimension of the source registers that tomography pins down.
    pub fn register_dim(&self) -> usize {
        match self.protocol {
            Protocol::Bb84 => self.dim_a,
            Protocol::Mdi => self.dim_a * self.dim_b,
        }
    }

    /// `P_j^A ⊗ P_i^B` (BB84) or `P_j^A ⊗ P_i^B ⊗ P_k^C` (MDI; `k` required).
    pub fn joint_outcome(&self, j: usize, i: usize, k: Option<usize>) -> Result<HermitianOperator> {
        let a = self
            .povm_a
            .get(j)
            .ok_or_else(|| Error::Validation(format!("Alice outcome {j} out of range")))?;
        let b = self
            .povm_b
            .get(i)
            .ok_or_else(|| Error::Validation(format!("Bob outcome {i} out of range")))?;
        match (self.protocol, k) {
            (Protocol::Bb84, None) => Ok(a.tensor(b)),
            (Protocol::Mdi, Some(k)) => {
                let cc = self
                    .povm_c
                    .get(k)
                    .ok_or_else(|| Error::Validation(format!("Charlie outcome {k} out of range")))?;
                Ok(a.tensor(b).tensor(cc))
            }
            _ => Err(Error::Validation("outcome arity does not match protocol".into())),
        }
    }
}

/// The G (announce + sift) and Z (key pinching) maps of one protocol instance,
/// together with a compressed representation on the support of G.
#[derive(Clone, Debug)]
pub struct GZMaps {
    input_dims: Vec<usize>,
    output_dims: Vec<usize>,
    kraus: Vec<ComplexMatrix>,
    key_maps: Vec<HermitianOperator>,
    /// `V† K_i` where the columns of V span the range of G, grouped by key value.
    compressed_kraus: Vec<ComplexMatrix>,
    key_blocks: Vec<Range<usize>>,
}

impl GZMaps {
    pub fn new(spec: &ProtocolSpec, bases: KeyBases) -> Result<Self> {
        let kraus = match bases {
            KeyBases::Both => spec.kraus_ops.clone(),
            KeyBases::ZOnly => vec![spec.kraus_ops[0].clone()],
        };
        Self::from_parts(spec.state_dims.clone(), spec.output_dims.clone(), kraus, spec.key_maps.clone())
    }

    pub fn from_parts(
        input_dims: Vec<usize>,
        output_dims: Vec<usize>,
        kraus: Vec<ComplexMatrix>,
        key_maps: Vec<HermitianOperator>,
    ) -> Result<Self> {
        let n: usize = input_dims.iter().product();
        let out: usize = output_dims.iter().product();
        for k in &kraus {
            if k.nrows() != out || k.ncols() != n {
                return Err(Error::DimensionMismatch { expected: out * n, got: k.nrows() * k.ncols() });
            }
        }
        for z in &key_maps {
            if z.dim() != out {
                return Err(Error::DimensionMismatch { expected: out, got: z.dim() });
            }
        }

        let g_id = kraus.iter().fold(ComplexMatrix::zeros(out, out), |acc, k| acc + k * k.adjoint());
        let pinched = key_maps
            .iter()
            .fold(ComplexMatrix::zeros(out, out), |acc, z| acc + z.matrix() * &g_id * z.matrix());
        let defect = (&g_id - &pinched).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect > 1e-10 {
            return Err(Error::Validation(format!(
                "key maps do not commute with the support of G (defect {defect:.2e})"
            )));
        }

        let scale = g_id.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        let mut columns: Vec<ComplexMatrix> = Vec::new();
        let mut key_blocks = Vec::with_capacity(key_maps.len());
        for z in &key_maps {
            let range = range_basis(z.matrix());
            let restricted = range.adjoint() * &g_id * &range;
            let eig = eig_matrix(&symmetrize(&restricted));
            let start = columns.len();
            for (idx, &val) in eig.values.iter().enumerate() {
                if val > 1e-12 * scale {
                    columns.push(&range * eig.vectors.columns(idx, 1));
                }
            }
            key_blocks.push(start..columns.len());
        }
        let r = columns.len();
        let mut v = ComplexMatrix::zeros(out, r);
        for (j, col) in columns.iter().enumerate() {
            v.set_column(j, &col.column(0));
        }
        let compressed_kraus = kraus.iter().map(|k| v.adjoint() * k).collect();

        Ok(Self { input_dims, output_dims, kraus, key_maps, compressed_kraus, key_blocks })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dims.iter().product()
    }

    /// Dimension of the support of G, where all the entropy computations happen.
    pub fn support_dim(&self) -> usize {
        self.key_blocks.last().map_or(0, |r| r.end)
    }

    fn check_input(&self, rho: &ComplexMatrix) -> Result<()> {
        let n = self.input_dim();
        if rho.nrows() != n || rho.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: rho.nrows() });
        }
        Ok(())
    }

    /// `Σ_i K_i ρ K_i†` on the full output space.
    pub fn apply_g(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        self.check_input(rho.matrix())?;
        let out: usize = self.output_dims.iter().product();
        let g = self
            .kraus
            .iter()
            .fold(ComplexMatrix::zeros(out, out), |acc, k| acc + k * rho.matrix() * k.adjoint());
        DensityOperator::with_dims(HermitianOperator::symmetrized(&g), self.output_dims.clone())
    }

    /// `Σ_j Z_j σ Z_j` on the full output space.
    pub fn apply_z(&self, sigma: &DensityOperator) -> Result<DensityOperator> {
        let out: usize = self.output_dims.iter().product();
        if sigma.dim() != out {
            return Err(Error::DimensionMismatch { expected: out, got: sigma.dim() });
        }
        let z = self
            .key_maps
            .iter()
            .fold(ComplexMatrix::zeros(out, out), |acc, p| acc + p.matrix() * sigma.matrix() * p.matrix());
        DensityOperator::with_dims(HermitianOperator::symmetrized(&z), self.output_dims.clone())
    }

    /// G(ρ) expressed in the compressed support basis.
    pub(crate) fn compressed_g(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let r = self.support_dim();
        let g = self
            .compressed_kraus
            .iter()
            .fold(ComplexMatrix::zeros(r, r), |acc, k| acc + k * rho * k.adjoint());
        symmetrize(&g)
    }

    /// `G̃_ε = (1 − ε) G̃ + ε I / r`.
    fn perturb(&self, g: &ComplexMatrix, eps: f64) -> ComplexMatrix {
        if eps == 0.0 {
            return g.clone();
        }
        let r = self.support_dim();
        g * c(1.0 - eps, 0.0) + ComplexMatrix::identity(r, r) * c(eps / r as f64, 0.0)
    }

    /// `D(X ‖ Z(X)) = H(Z(X)) − H(X)` for a compressed output `X`.
    pub(crate) fn entropy_gap(&self, g: &ComplexMatrix) -> f64 {
        let h_joint = von_neumann_entropy(&eigenvalues(g));
        let h_pinched: f64 = self
            .key_blocks
            .iter()
            .filter(|b| !b.is_empty())
            .map(|b| {
                let sub = g.view((b.start, b.start), (b.len(), b.len())).into_owned();
                von_neumann_entropy(&eigenvalues(&sub))
            })
            .sum();
        h_pinched - h_joint
    }

    /// `f(ρ) = D(G(ρ) ‖ Z(G(ρ)))` in bits.
    pub fn objective(&self, rho: &DensityOperator) -> Result<f64> {
        self.objective_perturbed(rho, 0.0)
    }

    /// `D(G_ε(ρ) ‖ Z(G_ε(ρ)))` with G's output mixed with weight ε into the
    /// maximally mixed state on its support.
    pub fn objective_perturbed(&self, rho: &DensityOperator, eps: f64) -> Result<f64> {
        self.check_input(rho.matrix())?;
        Ok(self.entropy_gap(&self.perturb(&self.compressed_g(rho.matrix()), eps)))
    }

    pub fn gradient(&self, rho: &DensityOperator) -> Result<HermitianOperator> {
        self.gradient_perturbed(rho, 0.0)
    }

    /// `(1 − ε) G†[log₂ G_ε(ρ) − log₂ Z(G_ε(ρ))]`; logs clamped at [`LOG_FLOOR`].
    pub fn gradient_perturbed(&self, rho: &DensityOperator, eps: f64) -> Result<HermitianOperator> {
        self.check_input(rho.matrix())?;
        let g = self.perturb(&self.compressed_g(rho.matrix()), eps);
        Ok(self.gradient_from_compressed(&g, eps))
    }

    /// Perturbed objective on a raw matrix, skipping input validation.
    pub(crate) fn value_at(&self, rho: &ComplexMatrix, eps: f64) -> f64 {
        self.entropy_gap(&self.perturb(&self.compressed_g(rho), eps))
    }

    pub(crate) fn gradient_at(&self, rho: &ComplexMatrix, eps: f64) -> HermitianOperator {
        let g = self.perturb(&self.compressed_g(rho), eps);
        self.gradient_from_compressed(&g, eps)
    }

    pub(crate) fn gradient_from_compressed(&self, g: &ComplexMatrix, eps: f64) -> HermitianOperator {
        let r = self.support_dim();
        let log_g = eig_matrix(g).map(|x| x.max(LOG_FLOOR).log2());
        let mut log_zg = ComplexMatrix::zeros(r, r);
        for b in self.key_blocks.iter().filter(|b| !b.is_empty()) {
            let sub = g.view((b.start, b.start), (b.len(), b.len())).into_owned();
            let l = eig_matrix(&sub).map(|x| x.max(LOG_FLOOR).log2());
            log_zg.view_mut((b.start, b.start), (b.len(), b.len())).copy_from(&l);
        }
        let diff = log_g - log_zg;
        let n = self.input_dim();
        let grad = self
            .compressed_kraus
            .iter()
            .fold(ComplexMatrix::zeros(n, n), |acc, k| acc + k.adjoint() * &diff * k);
        HermitianOperator::symmetrized(&(grad * c(1.0 - eps, 0.0)))
    }
}

/// Orthonormal columns spanning the range of a projector.
fn range_basis(p: &ComplexMatrix) -> ComplexMatrix {
    let n = p.nrows();
    let is_diagonal = (0..n).all(|i| (0..n).all(|j| i == j || p[(i, j)].norm() == 0.0));
    let cols: Vec<ComplexMatrix> = if is_diagonal {
        (0..n).filter(|&i| p[(i, i)].re > 0.5).map(|i| basis_ket(n, i)).collect()
    } else {
        let eig = eig_matrix(p);
        eig.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.5)
            .map(|(i, _)| eig.vectors.columns(i, 1).into_owned())
            .collect()
    };
    let mut out = ComplexMatrix::zeros(n, cols.len());
    for (j, col) in cols.iter().enumerate() {
        out.set_column(j, &col.column(0));
    }
    out
}
