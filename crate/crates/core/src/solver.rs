//! Minimization of the key-rate objective over the constrained state set:
//! Frank-Wolfe for an upper estimate, then a first-order certified lower bound.

use crate::error::{Error, Result};
use crate::linalg::{c, eig_matrix, symmetrize, trace_product, ComplexMatrix, DensityOperator, HermitianOperator};
use crate::protocol::GZMaps;
use crate::sdp::{self, BlockSdp, SdpEquality, SdpInterval, SdpOptions, SparseHermitian};

/// Upper ends at or below this mark a PSD interval operator as identically zero on the feasible set.
const ZERO_VALUE_TOL: f64 = 1e-15;
/// Relative eigenvalue threshold for the null space that defines the feasible face.
const FACE_TOL: f64 = 1e-12;
/// Entries of reduced constraint operators below this (relative) are dropped.
const SPARSE_DROP: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct EqualityConstraint {
    pub op: HermitianOperator,
    pub value: f64,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalConstraint {
    pub op: HermitianOperator,
    pub lower: f64,
    pub upper: f64,
    pub label: String,
}

/// Linear constraints on a density operator. Unit trace and PSD membership are always implied.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    dims: Vec<usize>,
    /// Index sets of the diagonal blocks every feasible state is confined to.
    blocks: Vec<Vec<usize>>,
    pub equalities: Vec<EqualityConstraint>,
    pub intervals: Vec<IntervalConstraint>,
    /// PSD operators with zero expectation on every feasible state.
    pub zero_support: Vec<(HermitianOperator, String)>,
}

impl ConstraintSet {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Validation(format!("invalid subsystem dimensions {dims:?}")));
        }
        let n = dims.iter().product();
        Ok(Self { dims, blocks: vec![(0..n).collect()], equalities: vec![], intervals: vec![], zero_support: vec![] })
    }

    /// Confines feasible states to the given disjoint diagonal blocks.
    pub fn with_blocks(mut self, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n = self.dim();
        let mut seen = vec![false; n];
        for &i in blocks.iter().flatten() {
            if i >= n || seen[i] {
                return Err(Error::Validation(format!("state blocks must be disjoint indices below {n}")));
            }
            seen[i] = true;
        }
        self.blocks = blocks;
        Ok(self)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    fn check_op(&self, op: &HermitianOperator) -> Result<()> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: op.dim() });
        }
        Ok(())
    }

    pub fn add_equality(&mut self, op: HermitianOperator, value: f64, label: impl Into<String>) -> Result<()> {
        self.check_op(&op)?;
        if !value.is_finite() {
            return Err(Error::Validation("equality value must be finite".into()));
        }
        self.equalities.push(EqualityConstraint { op, value, label: label.into() });
        Ok(())
    }

    pub fn add_interval(&mut self, op: HermitianOperator, lower: f64, upper: f64, label: impl Into<String>) -> Result<()> {
        self.check_op(&op)?;
        let label = label.into();
        if !(lower <= upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::Validation(format!("interval '{label}' is not ordered: [{lower}, {upper}]")));
        }
        self.intervals.push(IntervalConstraint { op, lower, upper, label });
        Ok(())
    }

    pub fn add_zero_support(&mut self, op: HermitianOperator, label: impl Into<String>) -> Result<()> {
        self.check_op(&op)?;
        if op.min_eigenvalue() < -1e-12 {
            return Err(Error::Validation("zero-support operator must be positive semidefinite".into()));
        }
        self.zero_support.push((op, label.into()));
        Ok(())
    }

    /// Largest constraint violation of `rho` and the constraint it belongs to.
    pub fn max_violation(&self, rho: &ComplexMatrix) -> (f64, String) {
        let mut worst = ((rho.trace().re - 1.0).abs(), "trace".to_string());
        for e in &self.equalities {
            let v = (trace_product(e.op.matrix(), rho) - e.value).abs();
            if v > worst.0 {
                worst = (v, e.label.clone());
            }
        }
        for iv in &self.intervals {
            let t = trace_product(iv.op.matrix(), rho);
            let v = (iv.lower - t).max(t - iv.upper).max(0.0);
            if v > worst.0 {
                worst = (v, iv.label.clone());
            }
        }
        for (op, label) in &self.zero_support {
            let v = trace_product(op.matrix(), rho).abs();
            if v > worst.0 {
                worst = (v, label.clone());
            }
        }
        worst
    }
}

/// The constraint set restricted to the smallest face of the PSD cone known to contain it,
/// in block form ready for the SDP solver.
#[derive(Clone, Debug)]
pub struct ReducedSet {
    n: usize,
    dims: Vec<usize>,
    /// Isometries `E_b` (n × r_b); feasible states are `Σ_b E_b X_b E_b†`.
    bases: Vec<ComplexMatrix>,
    equalities: Vec<SdpEquality>,
    intervals: Vec<SdpInterval>,
}

fn selection(n: usize, idx: &[usize]) -> ComplexMatrix {
    let mut e = ComplexMatrix::zeros(n, idx.len());
    for (j, &i) in idx.iter().enumerate() {
        e[(i, j)] = c(1.0, 0.0);
    }
    e
}

/// Orthonormal basis of the null space of a PSD matrix, as coordinate vectors when it is diagonal.
fn null_space(m: &ComplexMatrix) -> ComplexMatrix {
    let r = m.nrows();
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return ComplexMatrix::identity(r, r);
    }
    let diagonal = (0..r).all(|i| (0..r).all(|j| i == j || m[(i, j)].norm() == 0.0));
    if diagonal {
        let keep: Vec<usize> = (0..r).filter(|&i| m[(i, i)].re <= FACE_TOL * scale).collect();
        return selection(r, &keep);
    }
    let eig = eig_matrix(&symmetrize(m));
    let keep: Vec<usize> = (0..r).filter(|&i| eig.values[i] <= FACE_TOL * scale).collect();
    let mut out = ComplexMatrix::zeros(r, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &eig.vectors.column(i));
    }
    out
}

impl ReducedSet {
    pub fn new(cs: &ConstraintSet) -> Result<Self> {
        let n = cs.dim();
        let mut zero_sum = ComplexMatrix::zeros(n, n);
        for (op, _) in &cs.zero_support {
            zero_sum += op.matrix();
        }
        for iv in &cs.intervals {
            if iv.upper <= ZERO_VALUE_TOL && iv.lower <= 0.0 && iv.op.min_eigenvalue() >= -1e-14 {
                zero_sum += iv.op.matrix();
            }
        }
        let mut bases = Vec::new();
        for idx in &cs.blocks {
            let e = selection(n, idx);
            let m = e.adjoint() * &zero_sum * &e;
            let basis = &e * null_space(&m);
            if basis.ncols() > 0 {
                bases.push(basis);
            }
        }
        if bases.is_empty() {
            return Err(Error::Infeasible("zero-probability constraints exclude every state".into()));
        }
        let dims: Vec<usize> = bases.iter().map(|b| b.ncols()).collect();
        let reduce = |op: &HermitianOperator| {
            let blocks: Vec<ComplexMatrix> = bases.iter().map(|e| symmetrize(&(e.adjoint() * op.matrix() * e))).collect();
            SparseHermitian::from_blocks(&blocks, SPARSE_DROP)
        };
        let equalities = cs
            .equalities
            .iter()
            .map(|e| SdpEquality { op: reduce(&e.op), value: e.value, label: e.label.clone() })
            .collect();
        let intervals = cs
            .intervals
            .iter()
            .map(|iv| SdpInterval { op: reduce(&iv.op), lower: iv.lower, upper: iv.upper, label: iv.label.clone() })
            .collect();
        Ok(Self { n, dims, bases, equalities, intervals })
    }

    pub fn face_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lift(&self, x: &[ComplexMatrix]) -> ComplexMatrix {
        let mut rho = ComplexMatrix::zeros(self.n, self.n);
        for (e, xb) in self.bases.iter().zip(x) {
            rho += e * xb * e.adjoint();
        }
        symmetrize(&rho)
    }

    fn sdp(&self, objective: &ComplexMatrix) -> BlockSdp {
        BlockSdp {
            block_dims: self.dims.clone(),
            objective: self.bases.iter().map(|e| symmetrize(&(e.adjoint() * objective * e))).collect(),
            trace: 1.0,
            equalities: self.equalities.clone(),
            intervals: self.intervals.clone(),
        }
    }
}

/// A convex function of the state together with its gradient.
pub trait ConvexObjective {
    fn value(&self, rho: &ComplexMatrix) -> f64;
    fn gradient(&self, rho: &ComplexMatrix) -> HermitianOperator;
}

/// `f_ε(ρ) = D(G_ε(ρ) ‖ Z(G_ε(ρ)))`, where G's output is mixed with weight ε into
/// the maximally mixed state on its support. Since that state is a fixed point of
/// the pinching, joint convexity gives `f_ε ≤ (1 − ε) f ≤ f`, so lower bounds on
/// `f_ε` need no correction.
#[derive(Clone, Copy, Debug)]
pub struct EntropyObjective<'a> {
    pub maps: &'a GZMaps,
    pub eps: f64,
}

impl ConvexObjective for EntropyObjective<'_> {
    fn value(&self, rho: &ComplexMatrix) -> f64 {
        self.maps.value_at(rho, self.eps)
    }

    fn gradient(&self, rho: &ComplexMatrix) -> HermitianOperator {
        self.maps.gradient_at(rho, self.eps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub eps: f64,
    /// Stop once the Frank-Wolfe gap is below `tol_abs + tol_rel·|f|`.
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
    pub line_search_evals: usize,
    pub sdp: SdpOptions,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps: 1e-9,
            tol_abs: 1e-8,
            tol_rel: 2e-3,
            max_iter: 300,
            line_search_evals: 30,
            sdp: SdpOptions::default(),
            record_trace: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Subproblem {
    pub sigma: ComplexMatrix,
    /// `Tr(∇f σ)` at the returned σ.
    pub primal_value: f64,
    /// Certified lower bound on `Tr(∇f σ′)` over the feasible set.
    pub certified_min: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the default tolerance failed and a coarser solve was used.
    pub degraded: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub f: f64,
    pub fw_gap: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverDiagnostics {
    pub fw_gap: f64,
    pub subproblem_iterations: usize,
    pub subproblem_degraded: usize,
    /// `primal − certified` of the final linearized subproblem.
    pub certificate_gap: f64,
    pub eps: f64,
    /// Amount subtracted from the bound for the ε-perturbation (zero, see [`EntropyObjective`]).
    pub perturbation_correction: f64,
    pub face_dims: Vec<usize>,
    pub max_violation: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct SolverReport {
    pub rho_star: DensityOperator,
    pub f_upper: f64,
    pub f_lower_certified: f64,
    pub gap: f64,
    pub iterations: usize,
    pub diagnostics: SolverDiagnostics,
    pub trace: Vec<TraceRow>,
}

/// Analytic center of the feasible set (within the IPM tolerance).
pub fn feasible_init(cs: &ConstraintSet) -> Result<DensityOperator> {
    let reduced = ReducedSet::new(cs)?;
    let x = center(&reduced, &SdpOptions::default())?;
    let rho = reduced.lift(&x);
    DensityOperator::with_dims(HermitianOperator::symmetrized(&rho), cs.dims.clone())
}

fn center(reduced: &ReducedSet, opts: &SdpOptions) -> Result<Vec<ComplexMatrix>> {
    let sol = sdp::solve(&reduced.sdp(&ComplexMatrix::zeros(reduced.n, reduced.n)), opts)?;
    Ok(sol.x)
}

fn solve_linearized(reduced: &ReducedSet, grad: &HermitianOperator, opts: &SdpOptions) -> Result<Subproblem> {
    let problem = reduced.sdp(grad.matrix());
    let (sol, degraded) = match sdp::solve(&problem, opts) {
        Ok(sol) => {
            let degraded = !sol.converged;
            (sol, degraded)
        }
        Err(first) => {
            let coarse = SdpOptions { tol: opts.tol * 100.0, max_iter: opts.max_iter * 2 };
            (sdp::solve(&problem, &coarse).map_err(|_| first)?, true)
        }
    };
    let sigma = reduced.lift(&sol.x);
    Ok(Subproblem {
        primal_value: trace_product(grad.matrix(), &sigma),
        sigma,
        certified_min: sol.certified_bound,
        iterations: sol.iterations,
        converged: sol.converged,
        degraded,
    })
}

/// `min Tr(∇f σ)` over the constraint set, with a dual-certified lower bound.
pub fn linearized_subproblem(grad: &HermitianOperator, cs: &ConstraintSet, opts: &SdpOptions) -> Result<Subproblem> {
    if grad.dim() != cs.dim() {
        return Err(Error::DimensionMismatch { expected: cs.dim(), got: grad.dim() });
    }
    solve_linearized(&ReducedSet::new(cs)?, grad, opts)
}

fn golden_section(phi: impl Fn(f64) -> f64, evals: usize) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = phi(x1);
    let mut f2 = phi(x2);
    for _ in 2..evals.max(3) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = phi(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = phi(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Frank-Wolfe iterations from `rho0`. The report's lower bound is the last
/// linearization bound seen, which is already certified; call
/// [`certified_lower_bound`] for one taken exactly at the final iterate.
pub fn frank_wolfe<F: ConvexObjective>(
    objective: &F,
    cs: &ConstraintSet,
    rho0: &ComplexMatrix,
    opts: &SolverOptions,
) -> Result<SolverReport> {
    let reduced = ReducedSet::new(cs)?;
    run_frank_wolfe(objective, cs, &reduced, rho0.clone(), opts)
}

fn run_frank_wolfe<F: ConvexObjective>(
    objective: &F,
    cs: &ConstraintSet,
    reduced: &ReducedSet,
    mut rho: ComplexMatrix,
    opts: &SolverOptions,
) -> Result<SolverReport> {
    let mut f = objective.value(&rho);
    let mut trace = Vec::new();
    let mut diag = SolverDiagnostics { eps: opts.eps, face_dims: reduced.dims.clone(), ..Default::default() };
    let mut best_lower = f64::NEG_INFINITY;
    let mut iterations = 0;
    loop {
        let grad = objective.gradient(&rho);
        let sub = solve_linearized(reduced, &grad, &opts.sdp)
            .map_err(|e| Error::Numerical(format!("linearized subproblem failed at iteration {iterations}: {e}")))?;
        diag.subproblem_iterations += sub.iterations;
        diag.subproblem_degraded += sub.degraded as usize;
        let g_rho = trace_product(grad.matrix(), &rho);
        let fw_gap = g_rho - sub.primal_value;
        let lower = f - g_rho + sub.certified_min;
        if lower > best_lower {
            best_lower = lower;
            diag.certificate_gap = sub.primal_value - sub.certified_min;
        }
        diag.fw_gap = fw_gap;
        log::debug!("fw {iterations}: f {f:.10e} gap {fw_gap:.3e}");
        if fw_gap <= opts.tol_abs + opts.tol_rel * f.abs() {
            diag.converged = true;
            if opts.record_trace {
                trace.push(TraceRow { iteration: iterations, f, fw_gap, step: 0.0 });
            }
            break;
        }
        if iterations >= opts.max_iter {
            if opts.record_trace {
                trace.push(TraceRow { iteration: iterations, f, fw_gap, step: 0.0 });
            }
            break;
        }
        let dir = &sub.sigma - &rho;
        let (t, f_new) = golden_section(|t| objective.value(&(&rho + &dir * c(t, 0.0))), opts.line_search_evals);
        if opts.record_trace {
            trace.push(TraceRow { iteration: iterations, f, fw_gap, step: if f_new < f { t } else { 0.0 } });
        }
        if !(f_new < f) {
            break;
        }
        rho = symmetrize(&(&rho + &dir * c(t, 0.0)));
        f = f_new;
        iterations += 1;
    }
    let (viol, _) = cs.max_violation(&rho);
    diag.max_violation = viol;
    let rho_star = DensityOperator::with_dims(HermitianOperator::symmetrized(&rho), cs.dims.clone())?;
    Ok(SolverReport {
        rho_star,
        f_upper: f,
        f_lower_certified: best_lower,
        gap: f - best_lower,
        iterations,
        diagnostics: diag,
        trace,
    })
}

/// `f(ρ*) − Tr(∇f(ρ*) ρ*) + min_σ Tr(∇f(ρ*) σ)`, with the minimum certified by SDP duality.
/// Valid for any PSD `ρ*`, feasible or not.
pub fn certified_lower_bound<F: ConvexObjective>(
    objective: &F,
    rho_star: &ComplexMatrix,
    cs: &ConstraintSet,
    opts: &SdpOptions,
) -> Result<(f64, Subproblem)> {
    let grad = objective.gradient(rho_star);
    let sub = linearized_subproblem(&grad, cs, opts)?;
    let bound = objective.value(rho_star) - trace_product(grad.matrix(), rho_star) + sub.certified_min;
    Ok((bound, sub))
}

/// Full two-step solve: analytic-center start, Frank-Wolfe, certified bound.
pub fn minimize<F: ConvexObjective>(objective: &F, cs: &ConstraintSet, opts: &SolverOptions) -> Result<SolverReport> {
    let reduced = ReducedSet::new(cs)?;
    let x0 = center(&reduced, &opts.sdp)?;
    let rho0 = reduced.lift(&x0);
    let (viol, label) = cs.max_violation(&rho0);
    if viol > 1e-6 {
        return Err(Error::Infeasible(format!("constraint '{label}' violated by {viol:.3e} at the analytic center")));
    }
    run_frank_wolfe(objective, cs, &reduced, rho0, opts)
}

/// [`minimize`] for the key-rate objective; `f_upper` is reported unperturbed.
pub fn solve_key_rate(maps: &GZMaps, cs: &ConstraintSet, opts: &SolverOptions) -> Result<SolverReport> {
    let obj = EntropyObjective { maps, eps: opts.eps };
    let mut report = minimize(&obj, cs, opts)?;
    report.f_upper = maps.value_at(report.rho_star.matrix(), 0.0).max(report.f_upper);
    report.gap = report.f_upper - report.f_lower_certified;
    Ok(report)
}
