//! Small dense linear programs `min/max cᵀx  s.t.  l ≤ Ax ≤ u,  lx ≤ x ≤ ux`,
//! solved by a two-phase bounded-variable simplex. Every returned optimum comes
//! with a dual bound recomputed from the multipliers, valid for any multipliers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
    /// Optional row names used in infeasibility diagnostics.
    pub row_labels: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub primal_value: f64,
    /// Row multipliers in the sign convention of the original objective.
    pub duals: Vec<f64>,
    /// Lower bound on the optimum (minimize) or upper bound (maximize) implied by `duals`.
    pub dual_bound: f64,
    pub iterations: usize,
}

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-11;
const MAX_ITER: usize = 10_000;

impl LinearProgram {
    /// Box-constrained LP with no rows yet.
    pub fn new(sense: Sense, objective: Vec<f64>, var_lower: Vec<f64>, var_upper: Vec<f64>) -> Self {
        Self {
            sense,
            objective,
            rows: Vec::new(),
            row_lower: Vec::new(),
            row_upper: Vec::new(),
            var_lower,
            var_upper,
            row_labels: Vec::new(),
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, lower: f64, upper: f64, label: impl Into<String>) {
        self.rows.push(coeffs);
        self.row_lower.push(lower);
        self.row_upper.push(upper);
        self.row_labels.push(label.into());
    }

    fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if self.var_lower.len() != n || self.var_upper.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.var_lower.len().min(self.var_upper.len()) });
        }
        let m = self.rows.len();
        if self.row_lower.len() != m || self.row_upper.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: self.row_lower.len().min(self.row_upper.len()) });
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: r.len() });
            }
            if self.row_lower[i] > self.row_upper[i] {
                return Err(Error::Infeasible(format!(
                    "{}: lower bound {} exceeds upper bound {}",
                    self.label(i),
                    self.row_lower[i],
                    self.row_upper[i]
                )));
            }
        }
        for j in 0..n {
            if self.var_lower[j] > self.var_upper[j] {
                return Err(Error::Infeasible(format!("variable {j} has empty box")));
            }
            if self.var_lower[j] == f64::NEG_INFINITY && self.var_upper[j] == f64::INFINITY {
                return Err(Error::Validation(format!("variable {j} is free; give it a finite bound")));
            }
        }
        Ok(())
    }

    fn label(&self, i: usize) -> String {
        self.row_labels.get(i).filter(|s| !s.is_empty()).cloned().unwrap_or_else(|| format!("row {i}"))
    }

    /// Bound on `min cᵀx` implied by row multipliers `y` (minimize convention).
    fn min_dual_bound(&self, c: &[f64], y: &[f64]) -> f64 {
        let mut total = 0.0;
        for j in 0..c.len() {
            let mut d = c[j];
            for (i, row) in self.rows.iter().enumerate() {
                d -= y[i] * row[j];
            }
            total += min_linear(d, self.var_lower[j], self.var_upper[j]);
        }
        for i in 0..y.len() {
            total += min_linear(y[i], self.row_lower[i], self.row_upper[i]);
        }
        total
    }

    /// Bound on the optimum implied by arbitrary row multipliers, in the
    /// problem's own sense. Any `y` gives a valid (possibly infinite) bound.
    pub fn dual_bound(&self, duals: &[f64]) -> f64 {
        match self.sense {
            Sense::Minimize => self.min_dual_bound(&self.objective, duals),
            Sense::Maximize => {
                let c: Vec<f64> = self.objective.iter().map(|v| -v).collect();
                let y: Vec<f64> = duals.iter().map(|v| -v).collect();
                -self.min_dual_bound(&c, &y)
            }
        }
    }
}

/// `min { d·v : v ∈ [lo, hi] }`, with `0·∞ = 0`. Roundoff-sized coefficients
/// against an infinite bound count as zero; with finite bounds the value is exact.
fn min_linear(d: f64, lo: f64, hi: f64) -> f64 {
    let bound = if d > 0.0 { lo } else { hi };
    if bound.is_infinite() && d.abs() <= 1e-12 {
        return 0.0;
    }
    if d > 0.0 {
        d * lo
    } else if d < 0.0 {
        d * hi
    } else {
        0.0
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Basic,
    Lower,
    Upper,
}

struct Simplex {
    /// Column-major constraint matrix `[A | −I | artificials]`.
    cols: Vec<DVector<f64>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    value: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    iterations: usize,
}

impl Simplex {
    fn refactor(&mut self) -> Result<()> {
        let m = self.basis.len();
        let mut b = DMatrix::zeros(m, m);
        for (k, &j) in self.basis.iter().enumerate() {
            b.set_column(k, &self.cols[j]);
        }
        self.binv = b
            .try_inverse()
            .ok_or_else(|| Error::Numerical("simplex basis became singular".into()))?;
        let m = self.basis.len();
        let mut rhs = DVector::zeros(m);
        for (j, col) in self.cols.iter().enumerate() {
            if self.status[j] != Status::Basic {
                rhs -= col * self.value[j];
            }
        }
        let xb = &self.binv * rhs;
        for (k, &j) in self.basis.iter().enumerate() {
            self.value[j] = xb[k];
        }
        Ok(())
    }

    fn duals(&self, cost: &[f64]) -> DVector<f64> {
        let cb = DVector::from_iterator(self.basis.len(), self.basis.iter().map(|&j| cost[j]));
        self.binv.transpose() * cb
    }

    /// Runs bounded simplex iterations to optimality for `cost`.
    fn optimize(&mut self, cost: &[f64]) -> Result<()> {
        loop {
            if self.iterations >= MAX_ITER {
                return Err(Error::Numerical(format!("simplex exceeded {MAX_ITER} iterations")));
            }
            let y = self.duals(cost);
            // Bland's rule: first eligible column.
            let mut entering = None;
            for j in 0..self.cols.len() {
                if self.status[j] == Status::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = cost[j] - y.dot(&self.cols[j]);
                if (self.status[j] == Status::Lower && d < -OPT_TOL) || (self.status[j] == Status::Upper && d > OPT_TOL) {
                    entering = Some((j, if self.status[j] == Status::Lower { 1.0 } else { -1.0 }));
                    break;
                }
            }
            let Some((j, dir)) = entering else { return Ok(()) };
            self.iterations += 1;

            let w = &self.binv * &self.cols[j];
            let mut step = self.hi[j] - self.lo[j];
            let mut leave: Option<(usize, Status)> = None;
            for (k, &bj) in self.basis.iter().enumerate() {
                let rate = -dir * w[k];
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let (room, bound) = if rate < 0.0 {
                    (self.value[bj] - self.lo[bj], Status::Lower)
                } else {
                    (self.hi[bj] - self.value[bj], Status::Upper)
                };
                let t = (room / rate.abs()).max(0.0);
                let better = match leave {
                    None => t < step,
                    Some((lk, _)) => t < step || (t == step && bj < self.basis[lk]),
                };
                if t.is_finite() && better {
                    step = t;
                    leave = Some((k, bound));
                }
            }
            if !step.is_finite() {
                return Err(Error::Unbounded("objective decreases without limit".into()));
            }
            match leave {
                None => {
                    self.status[j] = if dir > 0.0 { Status::Upper } else { Status::Lower };
                    self.value[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
                    self.refactor()?;
                }
                Some((k, bound)) => {
                    let out = self.basis[k];
                    self.status[out] = bound;
                    self.value[out] = if bound == Status::Lower { self.lo[out] } else { self.hi[out] };
                    self.value[j] += dir * step;
                    self.status[j] = Status::Basic;
                    self.basis[k] = j;
                    self.refactor()?;
                }
            }
        }
    }
}

fn nearest_finite(lo: f64, hi: f64) -> (f64, Status) {
    if lo.is_finite() {
        (lo, Status::Lower)
    } else {
        (hi, Status::Upper)
    }
}

pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.objective.len();
    let m = lp.rows.len();
    let sign = if lp.sense == Sense::Minimize { 1.0 } else { -1.0 };

    let mut cols: Vec<DVector<f64>> = (0..n)
        .map(|j| DVector::from_iterator(m, lp.rows.iter().map(|r| r[j])))
        .collect();
    let mut lo = lp.var_lower.clone();
    let mut hi = lp.var_upper.clone();
    let mut value = vec![0.0; n];
    let mut status = vec![Status::Lower; n];
    for j in 0..n {
        let (v, s) = nearest_finite(lo[j], hi[j]);
        value[j] = v;
        status[j] = s;
    }
    for i in 0..m {
        let mut e = DVector::zeros(m);
        e[i] = -1.0;
        cols.push(e);
        lo.push(lp.row_lower[i]);
        hi.push(lp.row_upper[i]);
        value.push(0.0);
        status.push(Status::Basic);
    }

    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut artificial_rows = Vec::new();
    for i in 0..m {
        let ax: f64 = (0..n).map(|j| lp.rows[i][j] * value[j]).sum();
        let r = n + i;
        let target = if ax < lp.row_lower[i] {
            Some((lp.row_lower[i], Status::Lower))
        } else if ax > lp.row_upper[i] {
            Some((lp.row_upper[i], Status::Upper))
        } else {
            None
        };
        match target {
            None => value[r] = ax,
            Some((bound, st)) => {
                // A x − r + s·a = 0 with r parked at its violated bound and a ≥ 0 basic.
                value[r] = bound;
                status[r] = st;
                let s = if bound > ax { 1.0 } else { -1.0 };
                let mut e = DVector::zeros(m);
                e[i] = s;
                let a = cols.len();
                cols.push(e);
                lo.push(0.0);
                hi.push(f64::INFINITY);
                value.push((bound - ax).abs());
                status.push(Status::Basic);
                basis[i] = a;
                artificial_rows.push((a, i));
            }
        }
    }

    let total = cols.len();
    let mut sx = Simplex { cols, lo, hi, value, status, basis, binv: DMatrix::identity(m, m), iterations: 0 };
    sx.refactor()?;

    if !artificial_rows.is_empty() {
        let mut phase1 = vec![0.0; total];
        for &(a, _) in &artificial_rows {
            phase1[a] = 1.0;
        }
        sx.optimize(&phase1)?;
        let scale = 1.0 + lp.row_lower.iter().chain(&lp.row_upper).filter(|v| v.is_finite()).fold(0.0f64, |a, v| a.max(v.abs()));
        let (worst_a, worst_row) = artificial_rows
            .iter()
            .map(|&(a, i)| (sx.value[a], i))
            .fold((0.0, 0), |acc, v| if v.0 > acc.0 { v } else { acc });
        if worst_a > FEAS_TOL * scale {
            return Err(Error::Infeasible(format!(
                "{} cannot be satisfied (residual {worst_a:.3e})",
                lp.label(worst_row)
            )));
        }
        for &(a, _) in &artificial_rows {
            sx.hi[a] = 0.0;
            if sx.status[a] != Status::Basic {
                sx.value[a] = 0.0;
                sx.status[a] = Status::Lower;
            }
        }
        sx.refactor()?;
    }

    let mut cost = vec![0.0; total];
    for j in 0..n {
        cost[j] = sign * lp.objective[j];
    }
    sx.optimize(&cost)?;

    let y = sx.duals(&cost);
    let x: Vec<f64> = sx.value[..n].to_vec();
    let primal_value: f64 = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
    let duals: Vec<f64> = y.iter().map(|v| sign * v).collect();
    let dual_bound = lp.dual_bound(&duals);
    Ok(LpSolution { x, primal_value, duals, dual_bound, iterations: sx.iterations })
}
