//! Primal-dual interior-point method for small block-diagonal complex SDPs
//!
//! ```text
//! min ⟨C, X⟩  s.t.  Tr X = t,  Tr(A_i X) = b_i,  L_k ≤ Tr(A_k X) ≤ U_k,  X ⪰ 0
//! ```
//!
//! with HKM search directions and a Mehrotra corrector. Every returned
//! bound is recomputed from the dual multipliers alone, so it is a valid lower
//! bound on the optimum whether or not the iteration converged.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{c, eigenvalues, symmetrize, ComplexMatrix, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparseEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: C64,
}

/// Hermitian block-diagonal operator stored as its nonzero entries (both triangles).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseHermitian {
    pub entries: Vec<SparseEntry>,
}

impl SparseHermitian {
    /// Drops entries with modulus at most `drop_tol` times the largest one.
    pub fn from_blocks(blocks: &[ComplexMatrix], drop_tol: f64) -> Self {
        let scale = blocks.iter().flat_map(|b| b.iter()).map(|z| z.norm()).fold(0.0, f64::max);
        let mut entries = Vec::new();
        for (block, m) in blocks.iter().enumerate() {
            for col in 0..m.ncols() {
                for row in 0..m.nrows() {
                    let v = m[(row, col)];
                    if v.norm() > drop_tol * scale && v.norm() > 0.0 {
                        entries.push(SparseEntry { block, row, col, value: v });
                    }
                }
            }
        }
        Self { entries }
    }

    pub fn identity(block_dims: &[usize]) -> Self {
        let entries = block_dims
            .iter()
            .enumerate()
            .flat_map(|(block, &n)| (0..n).map(move |i| SparseEntry { block, row: i, col: i, value: c(1.0, 0.0) }))
            .collect();
        Self { entries }
    }

    /// `Re Tr(A Y)` for an arbitrary (not necessarily Hermitian) block matrix `Y`.
    pub fn inner(&self, y: &[ComplexMatrix]) -> f64 {
        self.entries.iter().map(|e| (e.value * y[e.block][(e.col, e.row)]).re).sum()
    }

    pub fn scaled(&self, f: f64) -> Self {
        let entries = self.entries.iter().map(|e| SparseEntry { value: e.value * f, ..*e }).collect();
        Self { entries }
    }

    /// `Y += s·A`.
    pub fn add_scaled_to(&self, y: &mut [ComplexMatrix], s: f64) {
        for e in &self.entries {
            y[e.block][(e.row, e.col)] += e.value * s;
        }
    }

    pub fn to_blocks(&self, block_dims: &[usize]) -> Vec<ComplexMatrix> {
        let mut out = zero_blocks(block_dims);
        self.add_scaled_to(&mut out, 1.0);
        out
    }

    fn frobenius_inner(&self, other: &SparseHermitian, block_dims: &[usize]) -> f64 {
        let dense = other.to_blocks(block_dims);
        self.inner(&dense)
    }
}

#[derive(Clone, Debug)]
pub struct SdpEquality {
    pub op: SparseHermitian,
    pub value: f64,
    pub label: String,
}

#[derive(Clone, Debug)]
pub struct SdpInterval {
    pub op: SparseHermitian,
    pub lower: f64,
    pub upper: f64,
    pub label: String,
}

#[derive(Clone, Debug)]
pub struct BlockSdp {
    pub block_dims: Vec<usize>,
    pub objective: Vec<ComplexMatrix>,
    /// Trace of every feasible point; imposed as a constraint.
    pub trace: f64,
    pub equalities: Vec<SdpEquality>,
    pub intervals: Vec<SdpInterval>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 100 }
    }
}

/// Dual multipliers, one per constraint of the original problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpMultipliers {
    pub trace: f64,
    pub equalities: Vec<f64>,
    /// Positive values act on the lower end of the interval, negative on the upper.
    pub intervals: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub x: Vec<ComplexMatrix>,
    pub primal_value: f64,
    pub dual_value: f64,
    /// Lower bound on the optimum implied by `multipliers`.
    pub certified_bound: f64,
    pub multipliers: SdpMultipliers,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub converged: bool,
}

/// Equality constraints whose Gram residual falls below this (relative) are treated as dependent.
const DEPENDENCY_TOL: f64 = 1e-10;
/// Allowed mismatch between a dependent constraint's value and the one implied by the others.
const CONSISTENCY_TOL: f64 = 1e-7;
const STEP_FACTOR: f64 = 0.98;
/// Iterations without halving the merit before giving up.
const STALL_ITERATIONS: usize = 6;
/// Best primal residual above which the problem is reported infeasible.
const INFEASIBLE_RESIDUAL: f64 = 1e-6;

pub fn zero_blocks(block_dims: &[usize]) -> Vec<ComplexMatrix> {
    block_dims.iter().map(|&n| ComplexMatrix::zeros(n, n)).collect()
}

fn blocks_inner(a: &[ComplexMatrix], b: &[ComplexMatrix]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p.conj() * q).re).sum::<f64>())
        .sum()
}

fn blocks_norm(a: &[ComplexMatrix]) -> f64 {
    blocks_inner(a, a).max(0.0).sqrt()
}

impl BlockSdp {
    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.block_dims.len() {
            return Err(Error::DimensionMismatch { expected: self.block_dims.len(), got: self.objective.len() });
        }
        for (m, &n) in self.objective.iter().zip(&self.block_dims) {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, got: m.nrows() });
            }
        }
        if !(self.trace > 0.0) {
            return Err(Error::Validation(format!("trace must be positive, got {}", self.trace)));
        }
        let ops = self.equalities.iter().map(|e| (&e.op, &e.label)).chain(self.intervals.iter().map(|i| (&i.op, &i.label)));
        for (op, label) in ops {
            for e in &op.entries {
                if e.block >= self.block_dims.len() || e.row >= self.block_dims[e.block] || e.col >= self.block_dims[e.block] {
                    return Err(Error::Validation(format!("constraint '{label}' has an entry outside its block")));
                }
            }
        }
        for iv in &self.intervals {
            if !(iv.lower <= iv.upper) {
                return Err(Error::Validation(format!(
                    "interval '{}' is empty: [{}, {}]",
                    iv.label, iv.lower, iv.upper
                )));
            }
        }
        Ok(())
    }

    /// Lower bound on the optimum from arbitrary multipliers:
    /// `t·λ_min(C − Σ λ A) + Σ λ b` with interval terms taking the matching endpoint.
    pub fn certify(&self, m: &SdpMultipliers) -> f64 {
        let mut slack = self.objective.clone();
        SparseHermitian::identity(&self.block_dims).add_scaled_to(&mut slack, -m.trace);
        let mut bound = m.trace * self.trace;
        for (e, &y) in self.equalities.iter().zip(&m.equalities) {
            e.op.add_scaled_to(&mut slack, -y);
            bound += y * e.value;
        }
        for (iv, &y) in self.intervals.iter().zip(&m.intervals) {
            iv.op.add_scaled_to(&mut slack, -y);
            bound += if y > 0.0 { y * iv.lower } else { y * iv.upper };
        }
        let lam = slack
            .iter()
            .filter(|b| b.nrows() > 0)
            .map(|b| *eigenvalues(&symmetrize(b)).last().unwrap())
            .fold(f64::INFINITY, f64::min);
        bound + self.trace * lam
    }
}

/// Origin of an internal row, used to map multipliers back.
#[derive(Clone, Copy, Debug)]
enum RowKind {
    Trace,
    Equality(usize),
    IntervalAsEquality(usize),
    Lower(usize),
    Upper(usize),
}

struct Row {
    op: usize,
    b: f64,
    /// Slack index and its coefficient in the row.
    slack: Option<(usize, f64)>,
    kind: RowKind,
    label: String,
    /// Norm the row was divided by.
    scale: f64,
}

struct Standard {
    dims: Vec<usize>,
    ops: Vec<SparseHermitian>,
    rows: Vec<Row>,
    n_slack: usize,
    /// Row `p` holds `[Re vec(A_p), −Im vec(A_p)]`.
    op_mat: DMatrix<f64>,
    offsets: Vec<usize>,
}

/// Pivoted Cholesky on a Gram matrix; returns kept indices in pivot order.
/// Index 0 is always pivoted first.
fn independent_subset(gram: &DMatrix<f64>) -> Vec<usize> {
    let n = gram.nrows();
    let scale = (0..n).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut resid: Vec<f64> = (0..n).map(|i| gram[(i, i)]).collect();
    let mut kept = Vec::new();
    let mut used = vec![false; n];
    for k in 0..n {
        let pick = if k == 0 {
            Some((0, &resid[0]))
        } else {
            resid.iter().enumerate().filter(|(i, _)| !used[*i]).max_by(|a, b| a.1.total_cmp(b.1))
        };
        let (p, &best) = match pick {
            Some(v) => v,
            None => break,
        };
        if best <= DEPENDENCY_TOL * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        used[p] = true;
        kept.push(p);
        let d = best.sqrt();
        l[(p, k)] = d;
        for i in 0..n {
            if used[i] {
                continue;
            }
            let mut v = gram[(i, p)];
            for j in 0..k {
                v -= l[(i, j)] * l[(p, j)];
            }
            l[(i, k)] = v / d;
            resid[i] -= l[(i, k)] * l[(i, k)];
        }
    }
    kept
}

fn standardize(sdp: &BlockSdp) -> Result<Standard> {
    let dims = sdp.block_dims.clone();
    let degenerate = |iv: &SdpInterval| iv.upper - iv.lower <= 1e-12;

    // Candidate equality ops: trace, equalities, degenerate intervals.
    let mut eq_ops: Vec<(SparseHermitian, f64, RowKind, String)> =
        vec![(SparseHermitian::identity(&dims), sdp.trace, RowKind::Trace, "trace".into())];
    for (i, e) in sdp.equalities.iter().enumerate() {
        eq_ops.push((e.op.clone(), e.value, RowKind::Equality(i), e.label.clone()));
    }
    for (i, iv) in sdp.intervals.iter().enumerate() {
        if degenerate(iv) {
            eq_ops.push((iv.op.clone(), 0.5 * (iv.lower + iv.upper), RowKind::IntervalAsEquality(i), iv.label.clone()));
        }
    }
    let dense: Vec<Vec<ComplexMatrix>> = eq_ops.iter().map(|o| o.0.to_blocks(&dims)).collect();
    let k = eq_ops.len();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let v = eq_ops[i].0.inner(&dense[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let kept = independent_subset(&gram);
    if kept.first() != Some(&0) {
        return Err(Error::Numerical("trace constraint was dropped as dependent".into()));
    }
    let kept_set: std::collections::BTreeSet<usize> = kept.iter().copied().collect();
    if kept.len() < k {
        let gkk = DMatrix::from_fn(kept.len(), kept.len(), |a, b| gram[(kept[a], kept[b])]);
        let bk = DVector::from_iterator(kept.len(), kept.iter().map(|&i| eq_ops[i].1));
        let chol = Cholesky::new(gkk).ok_or_else(|| Error::Numerical("equality Gram matrix not positive".into()))?;
        for i in (0..k).filter(|i| !kept_set.contains(i)) {
            let gki = DVector::from_iterator(kept.len(), kept.iter().map(|&j| gram[(j, i)]));
            let coef = chol.solve(&gki);
            let implied = coef.dot(&bk);
            if (implied - eq_ops[i].1).abs() > CONSISTENCY_TOL * (1.0 + eq_ops[i].1.abs()) {
                return Err(Error::Infeasible(format!(
                    "constraint '{}' requires {:.6e} but the other equalities force {:.6e}",
                    eq_ops[i].3, eq_ops[i].1, implied
                )));
            }
        }
    }

    // Rows are normalized to unit Frobenius norm.
    let mut ops = Vec::new();
    let mut rows = Vec::new();
    for &i in &kept {
        let (op, b, kind, label) = &eq_ops[i];
        let scale = gram[(i, i)].sqrt();
        ops.push(op.scaled(1.0 / scale));
        rows.push(Row { op: ops.len() - 1, b: *b / scale, slack: None, kind: *kind, label: label.clone(), scale });
    }
    let mut n_slack = 0;
    for (i, iv) in sdp.intervals.iter().enumerate() {
        if degenerate(iv) {
            continue;
        }
        let norm2 = iv.op.frobenius_inner(&iv.op, &dims);
        if norm2 <= 1e-24 {
            if iv.lower > 1e-12 || iv.upper < -1e-12 {
                return Err(Error::Infeasible(format!(
                    "constraint '{}' cannot reach [{:.6e}, {:.6e}] on the feasible face",
                    iv.label, iv.lower, iv.upper
                )));
            }
            continue;
        }
        let scale = norm2.sqrt();
        ops.push(iv.op.scaled(1.0 / scale));
        let op = ops.len() - 1;
        let label = iv.label.clone();
        rows.push(Row { op, b: iv.lower / scale, slack: Some((n_slack, -1.0)), kind: RowKind::Lower(i), label: label.clone(), scale });
        rows.push(Row { op, b: iv.upper / scale, slack: Some((n_slack + 1, 1.0)), kind: RowKind::Upper(i), label, scale });
        n_slack += 2;
    }
    let mut offsets = Vec::with_capacity(dims.len());
    let mut len = 0;
    for &n in &dims {
        offsets.push(len);
        len += n * n;
    }
    let mut op_mat = DMatrix::<f64>::zeros(ops.len(), 2 * len);
    for (p, op) in ops.iter().enumerate() {
        for e in &op.entries {
            let idx = offsets[e.block] + e.row * dims[e.block] + e.col;
            op_mat[(p, idx)] += e.value.re;
            op_mat[(p, len + idx)] -= e.value.im;
        }
    }
    Ok(Standard { dims, ops, rows, n_slack, op_mat, offsets })
}

struct BlockChol {
    l_inv: ComplexMatrix,
}

impl BlockChol {
    fn new(m: &ComplexMatrix) -> Option<Self> {
        let n = m.nrows();
        let chol = Cholesky::new(symmetrize(m))?;
        let l_inv = chol.l().solve_lower_triangular(&ComplexMatrix::identity(n, n))?;
        Some(Self { l_inv })
    }

    fn inverse(&self) -> ComplexMatrix {
        symmetrize(&(self.l_inv.adjoint() * &self.l_inv))
    }

    /// Largest α ≤ ∞ keeping `M + α D ⪰ 0`.
    fn max_step(&self, d: &ComplexMatrix) -> f64 {
        let s = symmetrize(&(&self.l_inv * d * self.l_inv.adjoint()));
        let lo = *eigenvalues(&s).last().unwrap();
        if lo < 0.0 {
            -1.0 / lo
        } else {
            f64::INFINITY
        }
    }
}

fn factor_blocks(m: &[ComplexMatrix]) -> Option<Vec<BlockChol>> {
    m.iter().map(BlockChol::new).collect()
}

fn vec_max_step(v: &[f64], d: &[f64]) -> f64 {
    v.iter()
        .zip(d)
        .filter(|(_, &dd)| dd < 0.0)
        .map(|(&x, &dd)| -x / dd)
        .fold(f64::INFINITY, f64::min)
}

struct Iterate {
    x: Vec<ComplexMatrix>,
    z: Vec<ComplexMatrix>,
    y: Vec<f64>,
    s: Vec<f64>,
    w: Vec<f64>,
}

struct Direction {
    dx: Vec<ComplexMatrix>,
    dz: Vec<ComplexMatrix>,
    dy: Vec<f64>,
    ds: Vec<f64>,
    dw: Vec<f64>,
}

impl Standard {
    fn apply(&self, y: &[ComplexMatrix]) -> Vec<f64> {
        let vals: Vec<f64> = self.ops.iter().map(|op| op.inner(y)).collect();
        self.rows.iter().map(|r| vals[r.op]).collect()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<ComplexMatrix> {
        let mut per_op = vec![0.0; self.ops.len()];
        for (r, &v) in self.rows.iter().zip(y) {
            per_op[r.op] += v;
        }
        let mut out = zero_blocks(&self.dims);
        for (op, &v) in self.ops.iter().zip(&per_op) {
            if v != 0.0 {
                op.add_scaled_to(&mut out, v);
            }
        }
        out
    }

    fn slack_times(&self, s: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.slack.map_or(0.0, |(k, sign)| sign * s[k])).collect()
    }

    fn slack_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_slack];
        for (r, &v) in self.rows.iter().zip(y) {
            if let Some((k, sign)) = r.slack {
                out[k] += sign * v;
            }
        }
        out
    }

    /// `G_pq = Re Tr(A_p X A_q Z⁻¹)` over the distinct operators.
    fn schur_ops(&self, x: &[ComplexMatrix], z_inv: &[ComplexMatrix]) -> DMatrix<f64> {
        let k = self.ops.len();
        let len = self.op_mat.ncols() / 2;
        // Column q holds `[Re, Im]` of `T_q = X A_q Z⁻¹` read transposed.
        let mut t_mat = DMatrix::<f64>::zeros(2 * len, k);
        for q in 0..k {
            let mut p: Vec<Option<ComplexMatrix>> = vec![None; self.dims.len()];
            for e in &self.ops[q].entries {
                let n = self.dims[e.block];
                let pb = p[e.block].get_or_insert_with(|| ComplexMatrix::zeros(n, n));
                for j in 0..n {
                    pb[(e.row, j)] += e.value * z_inv[e.block][(e.col, j)];
                }
            }
            for (bk, pb) in p.into_iter().enumerate() {
                if let Some(pb) = pb {
                    let t = &x[bk] * pb;
                    let n = self.dims[bk];
                    for r in 0..n {
                        for cc in 0..n {
                            let v = t[(cc, r)];
                            let idx = self.offsets[bk] + r * n + cc;
                            t_mat[(idx, q)] = v.re;
                            t_mat[(len + idx, q)] = v.im;
                        }
                    }
                }
            }
        }
        let g = &self.op_mat * t_mat;
        (&g + g.transpose()) * 0.5
    }
}

fn blocks_mul(a: &[ComplexMatrix], b: &[ComplexMatrix]) -> Vec<ComplexMatrix> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn blocks_axpy(a: &[ComplexMatrix], alpha: f64, d: &[ComplexMatrix]) -> Vec<ComplexMatrix> {
    a.iter().zip(d).map(|(x, y)| symmetrize(&(x + y * c(alpha, 0.0)))).collect()
}

pub fn solve(sdp: &BlockSdp, opts: &SdpOptions) -> Result<SdpSolution> {
    sdp.validate()?;
    let st = standardize(sdp)?;
    let m = st.rows.len();
    let n_total: usize = st.dims.iter().sum();
    let b: Vec<f64> = st.rows.iter().map(|r| r.b).collect();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c_norm = blocks_norm(&sdp.objective);
    let cone_dim = (n_total + st.n_slack) as f64;

    let z_scale = 1.0 + c_norm;
    // Start from the trace-normalized identity.
    let x0_scale = sdp.trace.max(f64::MIN_POSITIVE) / n_total as f64;
    let mut it = Iterate {
        x: st.dims.iter().map(|&n| ComplexMatrix::identity(n, n) * c(x0_scale, 0.0)).collect(),
        z: st.dims.iter().map(|&n| ComplexMatrix::identity(n, n) * c(z_scale, 0.0)).collect(),
        y: vec![0.0; m],
        s: vec![1.0; st.n_slack],
        w: vec![z_scale; st.n_slack],
    };

    let to_multipliers = |y: &[f64]| {
        let mut mult = SdpMultipliers {
            trace: 0.0,
            equalities: vec![0.0; sdp.equalities.len()],
            intervals: vec![0.0; sdp.intervals.len()],
        };
        for (r, &v) in st.rows.iter().zip(y) {
            let v = v / r.scale;
            match r.kind {
                RowKind::Trace => mult.trace += v,
                RowKind::Equality(i) => mult.equalities[i] += v,
                RowKind::IntervalAsEquality(i) | RowKind::Lower(i) | RowKind::Upper(i) => mult.intervals[i] += v,
            }
        }
        mult
    };

    let mut iterations = 0;
    // Best primal iterate by merit, best dual certificate by value.
    let mut best: Option<(f64, f64, f64, Vec<ComplexMatrix>, f64)> = None;
    let mut best_cert: Option<(f64, SdpMultipliers)> = None;
    let mut since_improved = 0;
    loop {
        // Residuals.
        let ax = st.apply(&it.x);
        let bs = st.slack_times(&it.s);
        let rp: Vec<f64> = (0..m).map(|i| b[i] - ax[i] - bs[i]).collect();
        let aty = st.adjoint(&it.y);
        let rd: Vec<ComplexMatrix> =
            sdp.objective.iter().zip(&aty).zip(&it.z).map(|((cc, a), z)| symmetrize(&(cc - a - z))).collect();
        let bty = st.slack_adjoint(&it.y);
        let rdl: Vec<f64> = (0..st.n_slack).map(|k| -bty[k] - it.w[k]).collect();

        let pinf = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + b_norm);
        let dinf = (blocks_inner(&rd, &rd) + rdl.iter().map(|v| v * v).sum::<f64>()).sqrt() / (1.0 + c_norm);
        let pobj = blocks_inner(&sdp.objective, &it.x);
        let dobj: f64 = b.iter().zip(&it.y).map(|(p, q)| p * q).sum();
        let mu = (blocks_inner(&it.x, &it.z) + it.s.iter().zip(&it.w).map(|(p, q)| p * q).sum::<f64>()) / cone_dim;
        let scale = 1.0 + pobj.abs() + dobj.abs();
        let rel_gap = (pobj - dobj).abs() / scale;
        let rel_compl = mu * cone_dim / scale;
        let merit = pinf.max(dinf).max(rel_gap).max(rel_compl);
        log::trace!("sdp it {iterations}: pobj {pobj:.10e} dobj {dobj:.10e} pinf {pinf:.2e} dinf {dinf:.2e} mu {mu:.2e}");

        let mult = to_multipliers(&it.y);
        let cert = sdp.certify(&mult);
        if cert.is_finite() && best_cert.as_ref().is_none_or(|(v, _)| cert > *v) {
            best_cert = Some((cert, mult));
        }
        if best.as_ref().is_none_or(|bst| merit < 0.5 * bst.0 || (merit < bst.0 && pinf <= bst.1)) {
            if best.as_ref().is_none_or(|bst| merit < 0.5 * bst.0) {
                since_improved = 0;
            }
            best = Some((merit, pinf, dinf, it.x.clone(), pobj));
        } else {
            since_improved += 1;
        }
        let usable = best.as_ref().is_some_and(|bst| bst.1 <= INFEASIBLE_RESIDUAL);
        if merit < opts.tol || iterations >= opts.max_iter || (usable && since_improved >= STALL_ITERATIONS) {
            break;
        }
        iterations += 1;

        let z_fac = match factor_blocks(&it.z) {
            Some(f) => f,
            None => break,
        };
        let x_fac = match factor_blocks(&it.x) {
            Some(f) => f,
            None => break,
        };
        let z_inv: Vec<ComplexMatrix> = z_fac.iter().map(|f| f.inverse()).collect();

        let g = st.schur_ops(&it.x, &z_inv);
        let mut schur = DMatrix::<f64>::from_fn(m, m, |i, j| g[(st.rows[i].op, st.rows[j].op)]);
        for (i, r) in st.rows.iter().enumerate() {
            if let Some((k, _)) = r.slack {
                schur[(i, i)] += it.s[k] / it.w[k];
            }
        }
        let diag_max = (0..m).map(|i| schur[(i, i)]).fold(0.0, f64::max).max(1e-300);
        let mut reg = 0.0;
        let chol = loop {
            let mut mm = schur.clone();
            for i in 0..m {
                mm[(i, i)] += reg;
            }
            if let Some(ch) = Cholesky::new(mm) {
                break Some(ch);
            }
            reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
            if reg > 1e-4 * diag_max {
                break None;
            }
        };
        let chol = match chol {
            Some(ch) => ch,
            None => break,
        };

        let x_rd_zinv: Vec<ComplexMatrix> =
            it.x.iter().zip(&rd).zip(&z_inv).map(|((x, r), zi)| x * r * zi).collect();

        let direction = |rc: &[ComplexMatrix], rc_s: &[f64]| -> Direction {
            // M Δy = r_p − 𝒜(Rc Z⁻¹ − X − X R_d Z⁻¹) − B(rc_s/w − s − s∘r_dl/w)
            let inner: Vec<ComplexMatrix> = (0..st.dims.len())
                .map(|bk| &rc[bk] * &z_inv[bk] - &it.x[bk] - &x_rd_zinv[bk])
                .collect();
            let a_inner = st.apply(&inner);
            let slack_part: Vec<f64> =
                (0..st.n_slack).map(|k| rc_s[k] / it.w[k] - it.s[k] - it.s[k] * rdl[k] / it.w[k]).collect();
            let b_slack = st.slack_times(&slack_part);
            let rhs = DVector::from_iterator(m, (0..m).map(|i| rp[i] - a_inner[i] - b_slack[i]));
            let dy: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
            let atdy = st.adjoint(&dy);
            let dz: Vec<ComplexMatrix> = rd.iter().zip(&atdy).map(|(r, a)| symmetrize(&(r - a))).collect();
            let dx: Vec<ComplexMatrix> = (0..st.dims.len())
                .map(|bk| symmetrize(&(&inner[bk] + &x_rd_zinv[bk] - &it.x[bk] * &dz[bk] * &z_inv[bk])))
                .collect();
            let btdy = st.slack_adjoint(&dy);
            let dw: Vec<f64> = (0..st.n_slack).map(|k| rdl[k] - btdy[k]).collect();
            let ds: Vec<f64> =
                (0..st.n_slack).map(|k| rc_s[k] / it.w[k] - it.s[k] - it.s[k] / it.w[k] * dw[k]).collect();
            Direction { dx, dz, dy, ds, dw }
        };
        let steps = |d: &Direction| -> (f64, f64) {
            let ap = x_fac
                .iter()
                .zip(&d.dx)
                .map(|(f, dx)| f.max_step(dx))
                .fold(vec_max_step(&it.s, &d.ds), f64::min);
            let ad = z_fac
                .iter()
                .zip(&d.dz)
                .map(|(f, dz)| f.max_step(dz))
                .fold(vec_max_step(&it.w, &d.dw), f64::min);
            ((STEP_FACTOR * ap).min(1.0), (STEP_FACTOR * ad).min(1.0))
        };

        // Predictor.
        let zero_rc = zero_blocks(&st.dims);
        let aff = direction(&zero_rc, &vec![0.0; st.n_slack]);
        let (ap, ad) = steps(&aff);
        let x_a = blocks_axpy(&it.x, ap, &aff.dx);
        let z_a = blocks_axpy(&it.z, ad, &aff.dz);
        let mu_aff = (blocks_inner(&x_a, &z_a)
            + (0..st.n_slack).map(|k| (it.s[k] + ap * aff.ds[k]) * (it.w[k] + ad * aff.dw[k])).sum::<f64>())
            / cone_dim;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let dxdz = blocks_mul(&aff.dx, &aff.dz);
        let rc: Vec<ComplexMatrix> = st
            .dims
            .iter()
            .zip(&dxdz)
            .map(|(&n, p)| ComplexMatrix::identity(n, n) * c(sigma * mu, 0.0) - p)
            .collect();
        let rc_s: Vec<f64> = (0..st.n_slack).map(|k| sigma * mu - aff.ds[k] * aff.dw[k]).collect();
        let dir = direction(&rc, &rc_s);
        let (ap, ad) = steps(&dir);

        it.x = blocks_axpy(&it.x, ap, &dir.dx);
        it.z = blocks_axpy(&it.z, ad, &dir.dz);
        for i in 0..m {
            it.y[i] += ad * dir.dy[i];
        }
        for k in 0..st.n_slack {
            it.s[k] += ap * dir.ds[k];
            it.w[k] += ad * dir.dw[k];
        }
        if ap < 1e-12 && ad < 1e-12 {
            break;
        }
    }

    let (merit, pinf, dinf, x, primal_value) = best.expect("at least one iterate is evaluated");
    let converged = merit < opts.tol;
    if !converged && pinf > INFEASIBLE_RESIDUAL {
        let ax = st.apply(&x);
        let bs = st.slack_times(&it.s);
        let worst = (0..m)
            .max_by(|&i, &j| (b[i] - ax[i] - bs[i]).abs().total_cmp(&(b[j] - ax[j] - bs[j]).abs()))
            .map(|i| &st.rows[i].label);
        return Err(Error::Infeasible(format!(
            "no feasible point found (residual {pinf:.3e}); most violated constraint: '{}'",
            worst.map_or("none", |s| s.as_str())
        )));
    }
    let (certified_bound, multipliers) = best_cert.unwrap_or_else(|| {
        let mult = to_multipliers(&it.y);
        (sdp.certify(&mult), mult)
    });
    let dual_value = multipliers.trace * sdp.trace
        + multipliers.equalities.iter().zip(&sdp.equalities).map(|(y, e)| y * e.value).sum::<f64>()
        + multipliers
            .intervals
            .iter()
            .zip(&sdp.intervals)
            .map(|(&y, iv)| if y > 0.0 { y * iv.lower } else { y * iv.upper })
            .sum::<f64>();

    Ok(SdpSolution {
        x,
        primal_value,
        dual_value,
        certified_bound,
        multipliers,
        iterations,
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        converged,
    })
}
