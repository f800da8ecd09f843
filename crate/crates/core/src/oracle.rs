//! Dense ground truth on small grids.
//!
//! Assembles `G_h`, the Kronecker sum `D_h = I ⊗ G_h + G_h ⊗ I`, and the
//! right-hand transfer matrix `Q` of the corrector, and performs full time
//! steps with dense LU factorizations. None of this shares code with the
//! matrix-free kernels it is used to check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{CellField, Domain2D};
use crate::mobility::{self, MobilityModel};
use crate::rng::SeededStream;
use crate::scheme::SchemeParams;

/// Largest grid (cells per side) the oracle will assemble.
pub const ORACLE_MAX_CELLS: usize = 64;

/// Square dense matrix of dimension at most `ORACLE_MAX_CELLS²`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_nalgebra(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.0.row_iter().map(|r| r.sum()).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..i).all(|j| (self.0[(i, j)] - self.0[(j, i)]).abs() <= tol))
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.0 + self.0.transpose()) * 0.5;
        let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `self · vec(u)`.
    pub fn mul_field(&self, u: &CellField) -> CellField {
        let v = &self.0 * DVector::from_column_slice(u.as_slice());
        CellField::from_vec(*u.domain(), v.as_slice().to_vec()).expect("dimension checked by caller")
    }

    /// Dense LU solve with partial pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let lu = self.0.clone().lu();
        lu.solve(&DVector::from_column_slice(rhs))
            .map(|x| x.as_slice().to_vec())
            .ok_or(Error::SingularMatrix)
    }
}

fn check_cap(m: usize) -> Result<()> {
    if !(2..=ORACLE_MAX_CELLS).contains(&m) {
        return Err(Error::OracleDimension {
            m,
            cap: ORACLE_MAX_CELLS,
        });
    }
    Ok(())
}

/// 1D Neumann second-difference matrix: diagonal `(-1, -2, …, -2, -1)/h²`,
/// off-diagonals `1/h²`.
pub fn assemble_gh(m: usize, h: f64) -> Result<DenseMatrix> {
    check_cap(m)?;
    let s = 1.0 / (h * h);
    let g = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            if i == 0 || i == m - 1 {
                -s
            } else {
                -2.0 * s
            }
        } else if i.abs_diff(j) == 1 {
            s
        } else {
            0.0
        }
    });
    Ok(DenseMatrix(g))
}

/// `D_h = I ⊗ G_h + G_h ⊗ I` in the row-major cell ordering.
pub fn assemble_dh(m: usize, h: f64) -> Result<DenseMatrix> {
    let g = assemble_gh(m, h)?.0;
    let eye = DMatrix::<f64>::identity(m, m);
    Ok(DenseMatrix(eye.kronecker(&g) + g.kronecker(&eye)))
}

fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

/// `Λ D_h` for the given mobility values.
pub fn mobility_laplacian(mobility_values: &CellField) -> Result<DenseMatrix> {
    let d = mobility_values.domain();
    let dh = assemble_dh(d.cells(), d.spacing())?.0;
    Ok(DenseMatrix(diag(mobility_values.as_slice()) * dh))
}

/// `Q = (1/τ - S₁/2 + S₂τ) I + (ε²/2) Λ D_h`.
pub fn q_matrix(tau: f64, params: &SchemeParams, mobility_values: &CellField) -> Result<DenseMatrix> {
    let n = mobility_values.domain().len();
    let ld = mobility_laplacian(mobility_values)?.0;
    let c = 1.0 / tau - 0.5 * params.s1 + params.s2 * tau;
    let eps2 = params.eps * params.eps;
    Ok(DenseMatrix(DMatrix::identity(n, n) * c + ld * (0.5 * eps2)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QMatrixCheck {
    pub min_entry: f64,
    /// Largest deviation of a row sum from `1/τ - S₁/2 + S₂τ`.
    pub row_sum_error: f64,
    pub nonnegative: bool,
}

pub fn check_q_matrix(tau: f64, params: &SchemeParams, mobility_values: &CellField) -> Result<QMatrixCheck> {
    let q = q_matrix(tau, params, mobility_values)?;
    let c = 1.0 / tau - 0.5 * params.s1 + params.s2 * tau;
    let min_entry = q.min_entry();
    let row_sum_error = q
        .row_sums()
        .iter()
        .map(|s| (s - c).abs())
        .fold(0.0, f64::max);
    Ok(QMatrixCheck {
        min_entry,
        row_sum_error,
        nonnegative: min_entry >= -1e-14,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenseScheme {
    Bdf1,
    CrankNicolson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseStep {
    /// Predictor state for Crank-Nicolson, `None` for BDF1.
    pub half_state: Option<CellField>,
    pub next_state: CellField,
}

fn field_map<M: MobilityModel + ?Sized>(u: &CellField, f: impl Fn(&M, f64) -> f64, model: &M) -> Vec<f64> {
    u.as_slice().iter().map(|&v| f(model, v)).collect()
}

fn dense_bdf1<M: MobilityModel + ?Sized>(
    state: &CellField,
    tau: f64,
    params: &SchemeParams,
    model: &M,
    dh: &DMatrix<f64>,
) -> Result<CellField> {
    let n = state.domain().len();
    let lambda = diag(&field_map(state, |m: &M, v| m.value(v), model));
    let c = 1.0 / tau + params.s1;
    let a = DMatrix::identity(n, n) * c - lambda * dh * (params.eps * params.eps);
    let f = field_map(state, mobility::reaction, model);
    let rhs: Vec<f64> = state.as_slice().iter().zip(&f).map(|(p, fv)| c * p - fv).collect();
    let x = DenseMatrix(a).solve(&rhs)?;
    CellField::from_vec(*state.domain(), x)
}

/// One BDF1 or Crank-Nicolson step through assembled matrices.
pub fn dense_step<M: MobilityModel + ?Sized>(
    state: &CellField,
    tau: f64,
    params: &SchemeParams,
    model: &M,
    which: DenseScheme,
) -> Result<DenseStep> {
    let d = state.domain();
    let dh = assemble_dh(d.cells(), d.spacing())?.0;
    match which {
        DenseScheme::Bdf1 => Ok(DenseStep {
            half_state: None,
            next_state: dense_bdf1(state, tau, params, model, &dh)?,
        }),
        DenseScheme::CrankNicolson => {
            let n = d.len();
            let half = dense_bdf1(state, 0.5 * tau, params, model, &dh)?;
            let lambda_vals = CellField::from_vec(*d, field_map(&half, |m: &M, v| m.value(v), model))?;
            let ld = diag(lambda_vals.as_slice()) * &dh;
            let eps2 = params.eps * params.eps;
            let lhs = DMatrix::identity(n, n) * (1.0 / tau + 0.5 * params.s1 + params.s2 * tau) - &ld * (0.5 * eps2);
            let q = q_matrix(tau, params, &lambda_vals)?.0;
            let f = field_map(&half, mobility::reaction, model);
            let qphi = q * DVector::from_column_slice(state.as_slice());
            let rhs: Vec<f64> = (0..n)
                .map(|i| qphi[i] + params.s1 * half.as_slice()[i] - f[i])
                .collect();
            let x = DenseMatrix(lhs).solve(&rhs)?;
            Ok(DenseStep {
                half_state: Some(half),
                next_state: CellField::from_vec(*d, x)?,
            })
        }
    }
}

/// Outcome of one named verification check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub observed: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn below(name: &str, observed: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: observed <= tolerance,
            observed,
            tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn random_field(d: Domain2D, stream: &mut SeededStream, lo: f64, hi: f64) -> CellField {
    let v = (0..d.len()).map(|_| lo + (hi - lo) * stream.next_unit()).collect();
    CellField::from_vec(d, v).expect("length matches domain")
}

fn rel_diff(a: &CellField, b: &CellField) -> f64 {
    let num = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let den = b.as_slice().iter().map(|v| v.abs()).fold(0.0, f64::max);
    num / den.max(f64::MIN_POSITIVE)
}

/// Cross-checks the matrix-free kernels against dense assembly.
///
/// Runs `trials` random cases per check with grid sizes cycling over `2..=8`.
pub fn verify_all(seed: u64, trials: usize) -> Result<VerificationReport> {
    use crate::grid::{grad, inner_edge, inner_l2, laplacian};
    use crate::linsolve::{solve, HelmholtzOperator};
    use crate::mobility::Mobility;
    use crate::scheme::{bdf1_step, cn_step};

    let mut stream = SeededStream::new(seed);
    let mut report = VerificationReport::default();
    let mut lap = 0.0_f64;
    let mut apply = 0.0_f64;
    let mut solve_err = 0.0_f64;
    let mut bdf1 = 0.0_f64;
    let mut cn = 0.0_f64;
    let mut sbp = 0.0_f64;
    let mut row_sum = 0.0_f64;

    for trial in 0..trials {
        let m = 2 + trial % 7;
        let side = 0.5 + stream.next_unit();
        let d = Domain2D::new(side, m)?;
        let dh = assemble_dh(m, d.spacing())?;

        let u = random_field(d, &mut stream, -1.0, 1.0);
        let v = random_field(d, &mut stream, -1.0, 1.0);
        lap = lap.max(rel_diff(&laplacian(&u), &dh.mul_field(&u)));

        let (ux, uy) = grad(&u);
        let (vx, vy) = grad(&v);
        let edge = inner_edge(&ux, &vx, &uy, &vy);
        sbp = sbp.max((-inner_l2(&laplacian(&u), &v) - edge).abs() / (1.0 + edge.abs()));

        let lam = random_field(d, &mut stream, 0.0, 1.0);
        let ld = mobility_laplacian(&lam)?;
        row_sum = row_sum.max(
            ld.row_sums()
                .iter()
                .map(|s| s.abs())
                .fold(0.0, f64::max)
                * d.spacing()
                * d.spacing(),
        );

        let shift = 1.0 + 10.0 * stream.next_unit();
        let kappa = 0.1 * stream.next_unit() * d.spacing() * d.spacing() * 10.0;
        let op = HelmholtzOperator::new(shift, kappa, lam.clone())?;
        let dense = DenseMatrix(DMatrix::identity(d.len(), d.len()) * shift - &ld.0 * kappa);
        apply = apply.max(rel_diff(&op.apply(&u), &dense.mul_field(&u)));
        let (x, _) = solve(&op, &u, &Default::default())?;
        let x_ref = CellField::from_vec(d, dense.solve(u.as_slice())?)?;
        solve_err = solve_err.max(rel_diff(&x, &x_ref));

        let model = if trial % 2 == 0 {
            Mobility::Constant(1.0)
        } else {
            Mobility::Degenerate
        };
        let s1 = mobility::s1_lower_bound(&model)?;
        let eps = 0.05 + 0.1 * stream.next_unit();
        let s2 = mobility::s2_lower_bound(s1, model.max_on_unit_interval(), eps, d.spacing());
        let params = SchemeParams::new(eps, s1, s2)?;
        let tau = 0.01 + stream.next_unit();
        let (b, _) = bdf1_step(&u, tau, &params, &model)?;
        let b_ref = dense_step(&u, tau, &params, &model, DenseScheme::Bdf1)?;
        bdf1 = bdf1.max(rel_diff(&b, &b_ref.next_state));
        let c = cn_step(&u, tau, &params, &model)?;
        let c_ref = dense_step(&u, tau, &params, &model, DenseScheme::CrankNicolson)?;
        let half_ref = c_ref.half_state.expect("crank-nicolson has a half state");
        cn = cn.max(rel_diff(&c.half_state, &half_ref)).max(rel_diff(&c.next_state, &c_ref.next_state));
    }

    report.checks.push(CheckResult::below("laplacian vs D_h", lap, 1e-13));
    report.checks.push(CheckResult::below("summation by parts", sbp, 1e-12));
    report.checks.push(CheckResult::below("row sums of Λ D_h (scaled by h²)", row_sum, 1e-13));
    report.checks.push(CheckResult::below("helmholtz apply vs dense", apply, 1e-13));
    report.checks.push(CheckResult::below("helmholtz solve vs dense LU", solve_err, 1e-10));
    report.checks.push(CheckResult::below("bdf1 step vs dense", bdf1, 1e-10));
    report.checks.push(CheckResult::below("crank-nicolson step vs dense", cn, 1e-10));

    // Structural properties of the assembled operators.
    let mut gh_worst = 0.0_f64;
    for m in 2..=16 {
        let g = assemble_gh(m, 1.0)?;
        let rows = g.row_sums().iter().map(|s| s.abs()).fold(0.0, f64::max);
        let top = g.symmetric_eigenvalues().last().copied().unwrap_or(0.0);
        gh_worst = gh_worst.max(rows).max(top);
        if !g.is_symmetric(0.0) {
            gh_worst = f64::INFINITY;
        }
    }
    report.checks.push(CheckResult::below("G_h zero row sums, symmetric, -G_h PSD", gh_worst, 1e-12));

    for (name, model) in [("constant", Mobility::Constant(1.0)), ("degenerate", Mobility::Degenerate)] {
        let s1 = mobility::s1_lower_bound(&model)?;
        let r = mobility::check_stabilized_bound(&model, s1);
        report.checks.push(CheckResult {
            name: format!("|S1 rho - f(rho)| <= S1 ({name}, S1 = {s1:.10})"),
            passed: r.passed,
            observed: r.max_deviation - s1,
            tolerance: 1e-12,
        });
    }

    for q in q_matrix_cases(&mut stream)? {
        report.checks.push(q);
    }
    Ok(report)
}

/// Q-matrix sign checks: nonnegative in both admissible regimes, negative
/// entries in a constructed inadmissible one.
fn q_matrix_cases(stream: &mut SeededStream) -> Result<Vec<CheckResult>> {
    let model = mobility::Mobility::Degenerate;
    let d = Domain2D::unit(6)?;
    let h = d.spacing();
    let eps = 1.5 * h;
    let s1 = 0.8;
    let l = model.max_on_unit_interval();
    let lam = random_field(d, stream, 0.0, l);

    let mut out = Vec::new();
    let s2 = mobility::s2_lower_bound(s1, l, eps, h);
    let params = SchemeParams::new(eps, s1, s2)?;
    let mut worst = f64::INFINITY;
    let mut row_err = 0.0_f64;
    for tau in [1e-3, 0.1, 1.0, 10.0, 1e3] {
        let c = check_q_matrix(tau, &params, &lam)?;
        worst = worst.min(c.min_entry);
        row_err = row_err.max(c.row_sum_error / (1.0 / tau + s2 * tau));
    }
    out.push(CheckResult::below("Q >= 0 with S2 at its bound, any tau", -worst, 1e-14));
    out.push(CheckResult::below("Q row sums = 1/tau - S1/2 + S2 tau", row_err, 1e-12));

    let params0 = SchemeParams::new(eps, s1, 0.0)?;
    let tau_bound = mobility::tau_max_conditional(s1, l, eps, h);
    let c = check_q_matrix(tau_bound, &params0, &lam)?;
    out.push(CheckResult::below("Q >= 0 with S2 = 0 at the step bound", -c.min_entry, 1e-14));

    let full = CellField::constant(d, l);
    let c = check_q_matrix(10.0 * tau_bound, &params0, &full)?;
    out.push(CheckResult {
        name: "Q has negative entries with S2 = 0, tau = 10x bound".into(),
        passed: c.min_entry < 0.0,
        observed: c.min_entry,
        tolerance: 0.0,
    });
    Ok(out)
}
