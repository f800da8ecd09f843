//! Matrix-free operators `A = c I - κ Λ D_h` and their iterative solution.
//!
//! Both stages of a time step solve a system of this form. When every
//! mobility entry is safely positive the system is rescaled by `Λ⁻¹` into the
//! symmetric positive definite `(c Λ⁻¹ - κ D_h)` and handed to Jacobi
//! preconditioned conjugate gradients. Otherwise (a degenerate mobility
//! touching zero, or a state that has left `[-1, 1]`) the original system goes
//! to Jacobi preconditioned BiCGSTAB.

use crate::error::{Error, Result};
use crate::grid::{CellField, Domain2D};
use crate::stencil::{self, dot, norm2};

/// Smallest mobility entry for which the symmetrized path is used.
pub const SYMMETRIZE_MIN_MOBILITY: f64 = 1e-12;

/// Number of times a solve restarts from its current iterate when the
/// recurrence residual and the true residual disagree.
const MAX_RESTARTS: usize = 8;

/// BiCGSTAB gives up after this many iterations without reducing its best
/// residual by 1%. Only indefinite systems (negative mobility) get there.
const STAGNATION_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct HelmholtzOperator {
    shift: f64,
    diffusion_scale: f64,
    mobility: CellField,
}

impl HelmholtzOperator {
    /// `shift` must be positive and `diffusion_scale` nonnegative.
    ///
    /// Mobility entries only need to be finite. Negative entries appear when
    /// a degenerate mobility is evaluated outside `[-1, 1]`; the operator is
    /// then indefinite and solved with the nonsymmetric path.
    pub fn new(shift: f64, diffusion_scale: f64, mobility: CellField) -> Result<Self> {
        if !(shift.is_finite() && shift > 0.0) {
            return Err(Error::param("shift", format!("must be positive, got {shift}")));
        }
        if !(diffusion_scale.is_finite() && diffusion_scale >= 0.0) {
            return Err(Error::param(
                "diffusion_scale",
                format!("must be nonnegative, got {diffusion_scale}"),
            ));
        }
        if !mobility.is_finite() {
            return Err(Error::param("mobility", "entries must be finite"));
        }
        Ok(Self {
            shift,
            diffusion_scale,
            mobility,
        })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn diffusion_scale(&self) -> f64 {
        self.diffusion_scale
    }

    pub fn mobility(&self) -> &CellField {
        &self.mobility
    }

    pub fn domain(&self) -> &Domain2D {
        self.mobility.domain()
    }

    /// `c u - κ Λ ⊙ Δ_h u`.
    pub fn apply(&self, u: &CellField) -> CellField {
        assert_eq!(u.domain(), self.domain(), "operand on a different domain");
        let mut out = CellField::zeros(*self.domain());
        self.apply_slice(u.as_slice(), out.as_mut_slice());
        out
    }

    fn apply_slice(&self, x: &[f64], out: &mut [f64]) {
        let d = self.domain();
        stencil::helmholtz(
            d.cells(),
            d.inv_h2(),
            self.shift,
            self.diffusion_scale,
            self.mobility.as_slice(),
            x,
            out,
        );
    }

    /// Diagonal of `A`: `c + κ λ_i n_i / h²` with `n_i` the neighbour count.
    fn diagonal(&self) -> Vec<f64> {
        let d = self.domain();
        let m = d.cells();
        let k = self.diffusion_scale * d.inv_h2();
        let lambda = self.mobility.as_slice();
        (0..m * m)
            .map(|idx| self.shift + k * lambda[idx] * stencil::neighbour_count(m, idx / m, idx % m))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub rel_tolerance: f64,
    pub abs_tolerance: f64,
    /// `None` means `10 * M²` for an `M x M` grid.
    pub max_iterations: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-12,
            abs_tolerance: 1e-14,
            max_iterations: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance.is_finite() && self.rel_tolerance > 0.0) {
            return Err(Error::param("solver.rel_tol", "must be positive"));
        }
        if !(self.abs_tolerance.is_finite() && self.abs_tolerance > 0.0) {
            return Err(Error::param("solver.abs_tol", "must be positive"));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::param("solver.max_iters", "must be positive"));
        }
        Ok(())
    }

    pub fn iteration_budget(&self, domain: &Domain2D) -> usize {
        self.max_iterations.unwrap_or(10 * domain.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    SymmetrizedCg,
    BiCgStab,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖A x - b‖₂ / ‖b‖₂` measured with a fresh operator application.
    pub final_relative_residual: f64,
    pub method: SolveMethod,
}

/// Solves `A x = rhs` from a zero initial guess.
///
/// On success `‖A x - rhs‖₂ ≤ rel_tolerance ‖rhs‖₂ + abs_tolerance`, checked
/// after the iteration with one extra application of `A`.
pub fn solve(op: &HelmholtzOperator, rhs: &CellField, cfg: &SolverConfig) -> Result<(CellField, SolveReport)> {
    assert_eq!(rhs.domain(), op.domain(), "right-hand side on a different domain");
    cfg.validate()?;
    if !rhs.is_finite() {
        return Err(Error::param("rhs", "entries must be finite"));
    }
    let min_mobility = op.mobility.min();
    let method = if min_mobility >= SYMMETRIZE_MIN_MOBILITY {
        SolveMethod::SymmetrizedCg
    } else {
        SolveMethod::BiCgStab
    };

    let b = rhs.as_slice();
    let b_norm = norm2(b);
    let target = cfg.rel_tolerance * b_norm + cfg.abs_tolerance;
    let budget = cfg.iteration_budget(op.domain());
    let n = b.len();

    let mut x = vec![0.0; n];
    let mut residual = b.to_vec();
    let mut work = vec![0.0; n];
    let mut iterations = 0;
    let mut true_norm = b_norm;

    // Each pass solves A dx = r for the current true residual r and adds dx to x.
    for _ in 0..=MAX_RESTARTS {
        if true_norm <= target || iterations >= budget {
            break;
        }
        let remaining = budget - iterations;
        iterations += match method {
            SolveMethod::SymmetrizedCg => cg_symmetrized(op, &residual, &mut x, target, remaining),
            SolveMethod::BiCgStab => bicgstab(op, &residual, &mut x, target, remaining),
        };
        op.apply_slice(&x, &mut work);
        for ((r, bi), ax) in residual.iter_mut().zip(b).zip(&work) {
            *r = bi - ax;
        }
        let previous = true_norm;
        true_norm = norm2(&residual);
        if !(true_norm < previous) {
            break;
        }
    }

    let report = SolveReport {
        iterations,
        final_relative_residual: if b_norm > 0.0 { true_norm / b_norm } else { true_norm },
        method,
    };
    if true_norm <= target && x.iter().all(|v| v.is_finite()) {
        Ok((CellField::from_vec(*op.domain(), x)?, report))
    } else {
        Err(Error::NonConvergence { report, stage: None })
    }
}

/// Preconditioned CG on `(c Λ⁻¹ - κ D_h) y = Λ⁻¹ r`, accumulating `y` into `x`.
///
/// Convergence is judged on the unscaled residual `Λ ⊙ r_sym`.
fn cg_symmetrized(op: &HelmholtzOperator, r0: &[f64], x: &mut [f64], target: f64, budget: usize) -> usize {
    let d = op.domain();
    let m = d.cells();
    let inv_h2 = d.inv_h2();
    let lambda = op.mobility.as_slice();
    let inv_lambda: Vec<f64> = lambda.iter().map(|l| 1.0 / l).collect();
    let k = op.diffusion_scale * inv_h2;
    let inv_diag: Vec<f64> = (0..m * m)
        .map(|idx| {
            1.0 / (op.shift * inv_lambda[idx] + k * stencil::neighbour_count(m, idx / m, idx % m))
        })
        .collect();

    let n = r0.len();
    let mut y = vec![0.0; n];
    let mut r: Vec<f64> = r0.iter().zip(&inv_lambda).map(|(a, il)| a * il).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, p)| a * p).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);

    let unscaled_norm = |r: &[f64]| -> f64 {
        r.iter().zip(lambda).map(|(a, l)| (a * l) * (a * l)).sum::<f64>().sqrt()
    };

    let mut it = 0;
    if unscaled_norm(&r) <= target {
        return 0;
    }
    while it < budget {
        stencil::helmholtz_symmetrized(m, inv_h2, op.shift, op.diffusion_scale, &inv_lambda, &p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            y[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        it += 1;
        if unscaled_norm(&r) <= target {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    for (xi, yi) in x.iter_mut().zip(&y) {
        *xi += yi;
    }
    it
}

/// Right-preconditioned BiCGSTAB on `A dx = r0`, accumulating `dx` into `x`.
fn bicgstab(op: &HelmholtzOperator, r0: &[f64], x: &mut [f64], target: f64, budget: usize) -> usize {
    let inv_diag: Vec<f64> = op
        .diagonal()
        .into_iter()
        .map(|a| if a.abs() > f64::MIN_POSITIVE { 1.0 / a } else { 1.0 })
        .collect();
    let n = r0.len();
    let mut dx = vec![0.0; n];
    let mut r = r0.to_vec();
    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zz = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);

    let mut it = 0;
    let mut best = norm2(&r);
    let mut last_improvement = 0;
    if best <= target {
        return 0;
    }
    while it < budget {
        let rho_new = dot(&r_hat, &r);
        if !rho_new.is_finite() {
            break;
        }
        if rho_new == 0.0 {
            // Shadow residual lost orthogonality; restart the recurrence.
            r_hat.copy_from_slice(&r);
            p.fill(0.0);
            v.fill(0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            if dot(&r_hat, &r) == 0.0 {
                break;
            }
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * inv_diag[i];
        }
        op.apply_slice(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            break;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        it += 1;
        if norm2(&s) <= target {
            for i in 0..n {
                dx[i] += alpha * y[i];
            }
            break;
        }
        for i in 0..n {
            zz[i] = s[i] * inv_diag[i];
        }
        op.apply_slice(&zz, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            dx[i] += alpha * y[i] + omega * zz[i];
            r[i] = s[i] - omega * t[i];
        }
        let r_norm = norm2(&r);
        if r_norm <= target || omega == 0.0 || !omega.is_finite() || !r_norm.is_finite() {
            break;
        }
        if r_norm < 0.99 * best {
            best = r_norm;
            last_improvement = it;
        } else if it - last_improvement >= STAGNATION_WINDOW {
            break;
        }
    }
    for (xi, d) in x.iter_mut().zip(&dx) {
        *xi += d;
    }
    it
}
