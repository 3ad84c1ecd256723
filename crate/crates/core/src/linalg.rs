//! Dense complex linear algebra for Hermitian operators.
//!
//! Everything here works on small dense matrices (a few dozen rows at most).
//! Logarithms are base 2 so entropies come out in bits.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;

/// Maximum entry-wise deviation from `M = M†` accepted on construction.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues below this are clamped before taking a logarithm.
pub const LOG_FLOOR: f64 = 1e-12;
/// Negative eigenvalues down to this are treated as roundoff.
pub const PSD_TOL: f64 = 1e-9;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest `|M_ij - conj(M_ji)|`.
pub fn hermitian_defect(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(M + M†) / 2`.
pub fn symmetrize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Kronecker product; dimensions multiply.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Kronecker product of a list of factors, left to right.
pub fn tensor_all(factors: &[&ComplexMatrix]) -> ComplexMatrix {
    let mut out = ComplexMatrix::from_element(1, 1, c(1.0, 0.0));
    for f in factors {
        out = out.kronecker(*f);
    }
    out
}

pub fn real_diag(values: &[f64]) -> ComplexMatrix {
    let n = values.len();
    let mut m = ComplexMatrix::zeros(n, n);
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = c(*v, 0.0);
    }
    m
}

/// Column vector from complex entries.
pub fn ket(entries: &[C64]) -> ComplexMatrix {
    ComplexMatrix::from_column_slice(entries.len(), 1, entries)
}

/// `|i⟩` in dimension `dim`, as a column.
pub fn basis_ket(dim: usize, i: usize) -> ComplexMatrix {
    let mut k = ComplexMatrix::zeros(dim, 1);
    k[(i, 0)] = c(1.0, 0.0);
    k
}

/// `|v⟩⟨v|` for a column vector.
pub fn projector(v: &ComplexMatrix) -> ComplexMatrix {
    v * v.adjoint()
}

/// `Re Tr(A B)`.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            let x = a[(i, k)] * b[(k, i)];
            acc += x.re;
        }
    }
    acc
}

/// A square complex matrix known to be Hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator(ComplexMatrix);

impl HermitianOperator {
    /// Validates squareness, finiteness and Hermiticity (within [`HERMITIAN_TOL`]),
    /// then stores the symmetrized matrix.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Validation(format!(
                "operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::Validation("operator must have positive dimension".into()));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Validation("operator has non-finite entries".into()));
        }
        let defect = hermitian_defect(&m);
        if defect > HERMITIAN_TOL {
            return Err(Error::Validation(format!(
                "operator is not Hermitian (max deviation {defect:.3e})"
            )));
        }
        Ok(Self(symmetrize(&m)))
    }

    /// Symmetrizes without checking. For internal arithmetic chains whose
    /// output is Hermitian up to roundoff.
    pub fn symmetrized(m: &ComplexMatrix) -> Self {
        Self(symmetrize(m))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(ComplexMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim, dim))
    }

    pub fn from_real_diagonal(values: &[f64]) -> Self {
        Self(real_diag(values))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    /// `Re Tr(self · other)`.
    pub fn inner(&self, other: &HermitianOperator) -> f64 {
        trace_product(&self.0, &other.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * c(s, 0.0))
    }

    pub fn add(&self, other: &HermitianOperator) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &HermitianOperator) -> Self {
        Self(&self.0 - &other.0)
    }

    /// `(1 - t)·self + t·other`.
    pub fn lerp(&self, other: &HermitianOperator, t: f64) -> Self {
        Self(&self.0 * c(1.0 - t, 0.0) + &other.0 * c(t, 0.0))
    }

    pub fn tensor(&self, other: &HermitianOperator) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eig_hermitian(self).values.last().copied().unwrap_or(0.0)
    }
}

/// Spectral decomposition `M = V diag(λ) V†` with eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// `V diag(g(λ)) V†`.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = g(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        scaled * self.vectors.adjoint()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map(|x| x)
    }
}

pub fn eig_hermitian(m: &HermitianOperator) -> EigenDecomposition {
    eig_matrix(m.matrix())
}

/// Eigendecomposition of a matrix assumed Hermitian.
pub(crate) fn eig_matrix(m: &ComplexMatrix) -> EigenDecomposition {
    let n = m.nrows();
    if n == 1 {
        return EigenDecomposition {
            values: vec![m[(0, 0)].re],
            vectors: ComplexMatrix::identity(1, 1),
        };
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    EigenDecomposition { values, vectors }
}

/// Eigenvalues only, descending.
pub(crate) fn eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    if m.nrows() == 1 {
        return vec![m[(0, 0)].re];
    }
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Base-2 matrix logarithm of a PSD operator; eigenvalues below `floor` are clamped to `floor`.
pub fn matrix_log(m: &HermitianOperator, floor: f64) -> Result<HermitianOperator> {
    if !(floor > 0.0) {
        return Err(Error::Validation(format!("log floor must be positive, got {floor}")));
    }
    let eig = eig_hermitian(m);
    if let Some(&lo) = eig.values.last() {
        if lo < -PSD_TOL {
            return Err(Error::Domain(format!(
                "matrix logarithm of operator with eigenvalue {lo:.3e}"
            )));
        }
    }
    Ok(HermitianOperator::symmetrized(&eig.map(|x| x.max(floor).log2())))
}

/// `-Σ λ log₂ λ` over the spectrum, ignoring (clamped) non-positive eigenvalues.
pub fn von_neumann_entropy(values: &[f64]) -> f64 {
    values
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum()
}

/// A PSD operator of trace at most one, with a tensor-factor layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    op: HermitianOperator,
    dims: Vec<usize>,
}

impl DensityOperator {
    /// Checks the subsystem layout, positivity (eigenvalues ≥ -1e-9) and trace ≤ 1 + 1e-9.
    pub fn new(op: HermitianOperator, dims: Vec<usize>) -> Result<Self> {
        let rho = Self::with_dims(op, dims)?;
        let lo = rho.op.min_eigenvalue();
        if lo < -PSD_TOL {
            return Err(Error::Validation(format!(
                "density operator has negative eigenvalue {lo:.3e}"
            )));
        }
        let tr = rho.op.trace();
        if !(-PSD_TOL..=1.0 + PSD_TOL).contains(&tr) {
            return Err(Error::Validation(format!("density operator trace {tr} outside [0, 1]")));
        }
        Ok(rho)
    }

    /// Checks only the layout.
    pub(crate) fn with_dims(op: HermitianOperator, dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Validation(format!("invalid subsystem dimensions {dims:?}")));
        }
        let product: usize = dims.iter().product();
        if product != op.dim() {
            return Err(Error::DimensionMismatch { expected: op.dim(), got: product });
        }
        Ok(Self { op, dims })
    }

    /// A single-factor state.
    pub fn from_operator(op: HermitianOperator) -> Result<Self> {
        let d = op.dim();
        Self::new(op, vec![d])
    }

    pub fn maximally_mixed(dims: Vec<usize>) -> Self {
        let d: usize = dims.iter().product();
        Self { op: HermitianOperator::identity(d).scale(1.0 / d as f64), dims }
    }

    pub fn op(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.op.matrix()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn trace(&self) -> f64 {
        self.op.trace()
    }

    pub fn into_op(self) -> HermitianOperator {
        self.op
    }

    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self { op: self.op.tensor(&other.op), dims }
    }
}

/// Traces out every subsystem not listed in `keep`. Kept factors stay in their original order.
pub fn partial_trace(rho: &DensityOperator, keep: &[usize]) -> Result<DensityOperator> {
    let dims = rho.dims();
    if keep.is_empty() {
        return Err(Error::Validation("partial trace must keep at least one subsystem".into()));
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if let Some(&bad) = keep_sorted.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::Validation(format!(
            "subsystem index {bad} out of range for {} subsystems",
            dims.len()
        )));
    }
    let out = partial_trace_matrix(rho.matrix(), dims, &keep_sorted);
    let out_dims: Vec<usize> = keep_sorted.iter().map(|&k| dims[k]).collect();
    DensityOperator::with_dims(HermitianOperator::symmetrized(&out), out_dims)
}

pub(crate) fn partial_trace_matrix(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> ComplexMatrix {
    let n = dims.len();
    let traced: Vec<usize> = (0..n).filter(|k| !keep.contains(k)).collect();
    let kept_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let d_keep: usize = kept_dims.iter().product();
    let d_trace: usize = traced_dims.iter().product();

    let mut strides = vec![1usize; n];
    for k in (0..n.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let full_index = |keep_idx: usize, trace_idx: usize| -> usize {
        let mut idx = 0;
        let mut rem = keep_idx;
        for (pos, &k) in keep.iter().enumerate().rev() {
            let d = kept_dims[pos];
            idx += (rem % d) * strides[k];
            rem /= d;
        }
        let mut rem = trace_idx;
        for (pos, &k) in traced.iter().enumerate().rev() {
            let d = traced_dims[pos];
            idx += (rem % d) * strides[k];
            rem /= d;
        }
        idx
    };

    let mut out = ComplexMatrix::zeros(d_keep, d_keep);
    for i in 0..d_keep {
        for j in 0..d_keep {
            let mut acc = c(0.0, 0.0);
            for t in 0..d_trace {
                acc += m[(full_index(i, t), full_index(j, t))];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Quantum relative entropy `D(ρ‖σ) = Tr ρ log₂ρ − Tr ρ log₂σ` in bits,
/// with σ's eigenvalues clamped at [`LOG_FLOOR`].
pub fn rel_entropy(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: sigma.dim() });
    }
    let rho_eigs = eigenvalues(rho.matrix());
    let neg_entropy = -von_neumann_entropy(&rho_eigs);
    let log_sigma = matrix_log(sigma.op(), LOG_FLOOR)?;
    Ok(neg_entropy - rho.op().inner(&log_sigma))
}

/// Orthonormal Hermitian basis of `dim × dim` Hermitian matrices:
/// `|i⟩⟨i|`, `(|i⟩⟨j| + |j⟩⟨i|)/√2`, `i(|i⟩⟨j| − |j⟩⟨i|)/√2` for `i < j`.
pub fn hermitian_basis(dim: usize) -> Vec<HermitianOperator> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        let mut m = ComplexMatrix::zeros(dim, dim);
        m[(i, i)] = c(1.0, 0.0);
        out.push(HermitianOperator(m));
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            let mut re = ComplexMatrix::zeros(dim, dim);
            re[(i, j)] = c(s, 0.0);
            re[(j, i)] = c(s, 0.0);
            out.push(HermitianOperator(re));
            let mut im = ComplexMatrix::zeros(dim, dim);
            im[(i, j)] = c(0.0, s);
            im[(j, i)] = c(0.0, -s);
            out.push(HermitianOperator(im));
        }
    }
    out
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frob(m: &ComplexMatrix) -> f64 {
        m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn eig_identity() {
        let e = eig_hermitian(&HermitianOperator::identity(2));
        assert_eq!(e.values, vec![1.0, 1.0]);
        assert!(frob(&(e.reconstruct() - ComplexMatrix::identity(2, 2))) < 1e-14);
    }

    #[test]
    fn eig_pauli_x() {
        let x = HermitianOperator::new(ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        ))
        .unwrap();
        let e = eig_hermitian(&x);
        assert_abs_diff_eq!(e.values[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], -1.0, epsilon = 1e-14);
    }

    #[test]
    fn eig_reconstructs_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [12, 48] {
            let m = random_hermitian(&mut rng, n);
            let e = eig_hermitian(&m);
            assert!(frob(&(e.reconstruct() - m.matrix())) < 1e-9);
            let vtv = e.vectors.adjoint() * &e.vectors;
            assert!(frob(&(vtv - ComplexMatrix::identity(n, n))) < 1e-9);
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        );
        assert!(matches!(HermitianOperator::new(m), Err(Error::Validation(_))));
    }

    #[test]
    fn log_of_identity_is_zero() {
        let l = matrix_log(&HermitianOperator::identity(3), 1e-12).unwrap();
        assert!(frob(l.matrix()) < 1e-14);
    }

    #[test]
    fn log_powers_of_two_and_clamping() {
        let l = matrix_log(&HermitianOperator::from_real_diagonal(&[4.0, 2.0]), 1e-12).unwrap();
        assert_abs_diff_eq!(l.matrix()[(0, 0)].re, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.matrix()[(1, 1)].re, 1.0, epsilon = 1e-12);
        let l = matrix_log(&HermitianOperator::from_real_diagonal(&[1.0, 0.0]), 1e-12).unwrap();
        assert_abs_diff_eq!(l.matrix()[(0, 0)].re, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.matrix()[(1, 1)].re, (1e-12f64).log2(), epsilon = 1e-9);
    }

    #[test]
    fn log_of_negative_operator_is_domain_error() {
        let r = matrix_log(&HermitianOperator::from_real_diagonal(&[1.0, -0.1]), 1e-12);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn tensor_examples() {
        let i6 = tensor(&ComplexMatrix::identity(2, 2), &ComplexMatrix::identity(3, 3));
        assert_eq!(i6, ComplexMatrix::identity(6, 6));
        let d = tensor(&real_diag(&[1.0, 0.0]), &real_diag(&[0.0, 1.0]));
        assert_eq!(d, real_diag(&[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn tensor_is_associative_and_mixed_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 2, 2);
        let b = random_matrix(&mut rng, 2, 2);
        let cc = random_matrix(&mut rng, 2, 2);
        let d = random_matrix(&mut rng, 2, 2);
        let lhs = tensor(&tensor(&a, &b), &cc);
        let rhs = tensor(&a, &tensor(&b, &cc));
        assert!(frob(&(lhs - rhs)) < 1e-13);
        let lhs = tensor(&a, &b) * tensor(&cc, &d);
        let rhs = tensor(&(&a * &cc), &(&b * &d));
        assert!(frob(&(lhs - rhs)) < 1e-13);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ra = DensityOperator::new(random_density(&mut rng, 4), vec![4]).unwrap();
        let rb = DensityOperator::new(random_density(&mut rng, 3), vec![3]).unwrap();
        let ab = ra.tensor(&rb);
        let back = partial_trace(&ab, &[0]).unwrap();
        assert!(frob(&(back.matrix() - ra.matrix())) < 1e-13);
        let back_b = partial_trace(&ab, &[1]).unwrap();
        assert!(frob(&(back_b.matrix() - rb.matrix())) < 1e-13);
    }

    #[test]
    fn partial_trace_of_bell_state() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phi = ket(&[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]);
        let rho =
            DensityOperator::new(HermitianOperator::new(projector(&phi)).unwrap(), vec![2, 2]).unwrap();
        let r = partial_trace(&rho, &[0]).unwrap();
        assert!(frob(&(r.matrix() - real_diag(&[0.5, 0.5]))) < 1e-14);
    }

    #[test]
    fn partial_trace_preserves_trace_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let rho = DensityOperator::new(random_density(&mut rng, 12), vec![4, 3]).unwrap();
            for keep in [[0usize], [1]] {
                let r = partial_trace(&rho, &keep).unwrap();
                assert_abs_diff_eq!(r.trace(), rho.trace(), epsilon = 1e-12);
                assert!(r.op().min_eigenvalue() >= -1e-9);
            }
        }
    }

    #[test]
    fn partial_trace_rejects_bad_index() {
        let rho = DensityOperator::maximally_mixed(vec![2, 2]);
        assert!(matches!(partial_trace(&rho, &[2]), Err(Error::Validation(_))));
        assert!(matches!(partial_trace(&rho, &[]), Err(Error::Validation(_))));
    }

    #[test]
    fn rel_entropy_examples() {
        let rho = DensityOperator::from_operator(HermitianOperator::from_real_diagonal(&[1.0, 0.0])).unwrap();
        let mixed = DensityOperator::from_operator(HermitianOperator::from_real_diagonal(&[0.5, 0.5])).unwrap();
        assert_abs_diff_eq!(rel_entropy(&rho, &rho).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rel_entropy(&rho, &mixed).unwrap(), 1.0, epsilon = 1e-12);
        let sigma =
            DensityOperator::from_operator(HermitianOperator::from_real_diagonal(&[0.75, 0.25])).unwrap();
        let expected = 0.5 * (0.5f64 / 0.75).log2() + 0.5 * (0.5f64 / 0.25).log2();
        assert_abs_diff_eq!(rel_entropy(&mixed, &sigma).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.2075, epsilon = 1e-4);
    }

    #[test]
    fn rel_entropy_dimension_mismatch() {
        let a = DensityOperator::maximally_mixed(vec![2]);
        let b = DensityOperator::maximally_mixed(vec![3]);
        assert!(matches!(rel_entropy(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn hermitian_basis_is_orthonormal() {
        let basis = hermitian_basis(4);
        assert_eq!(basis.len(), 16);
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(a.inner(b), expected, epsilon = 1e-14);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn klein_inequality(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = DensityOperator::from_operator(random_density(&mut rng, 4)).unwrap();
                let b = DensityOperator::from_operator(random_density(&mut rng, 4)).unwrap();
                prop_assert!(rel_entropy(&a, &b).unwrap() >= -1e-9);
                prop_assert!(rel_entropy(&a, &a).unwrap().abs() <= 1e-9);
            }

            #[test]
            fn tensor_of_psd_is_psd(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_density(&mut rng, 3);
                let b = random_density(&mut rng, 2);
                prop_assert!(a.tensor(&b).min_eigenvalue() >= -1e-12);
            }
        }
    }
}
