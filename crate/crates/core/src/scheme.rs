//! The stabilized BDF1 step and the doubly stabilized Crank-Nicolson step.
//!
//! BDF1 (one linear solve):
//!
//! ```text
//! [(1/τ + S₁) I - ε² Λⁿ D_h] Φ⁺ = (1/τ + S₁) Φⁿ - f(Φⁿ)
//! ```
//!
//! Crank-Nicolson (two linear solves): a BDF1 predictor over `τ/2` gives
//! `Φ^{n+1/2}`, then with `Λ = diag M(Φ^{n+1/2})`
//!
//! ```text
//! [(1/τ + S₁/2 + S₂τ) I - (ε²/2) Λ D_h] Φ^{n+1}
//!     = [(1/τ - S₁/2 + S₂τ) I + (ε²/2) Λ D_h] Φⁿ + S₁ Φ^{n+1/2} - f(Φ^{n+1/2})
//! ```
//!
//! No clamping is ever applied to the iterates.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{laplacian, CellField};
use crate::linsolve::{solve, HelmholtzOperator, SolveReport, SolverConfig};
use crate::mobility::{reaction, MobilityModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub eps: f64,
    pub s1: f64,
    pub s2: f64,
    pub solver: SolverConfig,
}

impl SchemeParams {
    pub fn new(eps: f64, s1: f64, s2: f64) -> Result<Self> {
        let p = Self {
            eps,
            s1,
            s2,
            solver: SolverConfig::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_solver(mut self, solver: SolverConfig) -> Self {
        self.solver = solver;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::param("eps", format!("must be positive, got {}", self.eps)));
        }
        if !(self.s1.is_finite() && self.s1 >= 0.0) {
            return Err(Error::param("s1", format!("must be nonnegative, got {}", self.s1)));
        }
        if !(self.s2.is_finite() && self.s2 >= 0.0) {
            return Err(Error::param("s2", format!("must be nonnegative, got {}", self.s2)));
        }
        self.solver.validate()
    }
}

/// Which linear solve of a step failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// A standalone BDF1 step.
    Bdf1,
    /// The half-step BDF1 predictor of a Crank-Nicolson step.
    Predictor,
    /// The trapezoidal corrector of a Crank-Nicolson step.
    Corrector,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Bdf1 => "BDF1 step",
            Stage::Predictor => "predictor",
            Stage::Corrector => "corrector",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub half_state: CellField,
    pub next_state: CellField,
    pub predictor_report: SolveReport,
    pub corrector_report: SolveReport,
}

pub(crate) fn mobility_field<M: MobilityModel + ?Sized>(model: &M, state: &CellField) -> CellField {
    state.map(|v| model.value(v))
}

pub(crate) fn reaction_field<M: MobilityModel + ?Sized>(model: &M, state: &CellField) -> CellField {
    state.map(|v| reaction(model, v))
}

fn check_step(state: &CellField, tau: f64, params: &SchemeParams) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    if !state.is_finite() {
        return Err(Error::param("state", "entries must be finite"));
    }
    params.validate()
}

fn tag(stage: Stage) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::NonConvergence { report, .. } => Error::NonConvergence {
            report,
            stage: Some(stage),
        },
        other => other,
    }
}

fn bdf1_unchecked<M: MobilityModel + ?Sized>(
    state: &CellField,
    tau: f64,
    params: &SchemeParams,
    model: &M,
) -> Result<(CellField, SolveReport)> {
    let shift = 1.0 / tau + params.s1;
    let f = reaction_field(model, state);
    let rhs = CellField::from_vec(
        *state.domain(),
        state
            .as_slice()
            .iter()
            .zip(f.as_slice())
            .map(|(phi, fv)| shift * phi - fv)
            .collect(),
    )?;
    let op = HelmholtzOperator::new(shift, params.eps * params.eps, mobility_field(model, state))?;
    solve(&op, &rhs, &params.solver)
}

/// One stabilized BDF1 step of size `tau`.
pub fn bdf1_step<M: MobilityModel + ?Sized>(
    state: &CellField,
    tau: f64,
    params: &SchemeParams,
    model: &M,
) -> Result<(CellField, SolveReport)> {
    check_step(state, tau, params)?;
    bdf1_unchecked(state, tau, params, model).map_err(tag(Stage::Bdf1))
}

/// One doubly stabilized Crank-Nicolson step of size `tau`.
pub fn cn_step<M: MobilityModel + ?Sized>(
    state: &CellField,
    tau: f64,
    params: &SchemeParams,
    model: &M,
) -> Result<StepOutput> {
    check_step(state, tau, params)?;
    let (half, predictor_report) =
        bdf1_unchecked(state, 0.5 * tau, params, model).map_err(tag(Stage::Predictor))?;

    let kappa = 0.5 * params.eps * params.eps;
    let lhs_shift = 1.0 / tau + 0.5 * params.s1 + params.s2 * tau;
    let rhs_shift = 1.0 / tau - 0.5 * params.s1 + params.s2 * tau;
    let lambda = mobility_field(model, &half);
    let f_half = reaction_field(model, &half);
    let lap = laplacian(state);

    let phi = state.as_slice();
    let lam = lambda.as_slice();
    let lap = lap.as_slice();
    let h = half.as_slice();
    let fh = f_half.as_slice();
    let rhs: Vec<f64> = (0..phi.len())
        .map(|i| rhs_shift * phi[i] + kappa * lam[i] * lap[i] + params.s1 * h[i] - fh[i])
        .collect();
    let rhs = CellField::from_vec(*state.domain(), rhs)?;

    let op = HelmholtzOperator::new(lhs_shift, kappa, lambda).map_err(tag(Stage::Corrector))?;
    let (next, corrector_report) = solve(&op, &rhs, &params.solver).map_err(tag(Stage::Corrector))?;
    Ok(StepOutput {
        half_state: half,
        next_state: next,
        predictor_report,
        corrector_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{norm_l2, norm_sup, Domain2D};
    use crate::mobility::Mobility;

    fn params() -> SchemeParams {
        SchemeParams::new(0.05, 2.0, 2.0).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SchemeParams::new(0.0, 1.0, 1.0).is_err());
        assert!(SchemeParams::new(0.1, -1.0, 1.0).is_err());
        assert!(SchemeParams::new(0.1, 1.0, f64::NAN).is_err());
        let d = Domain2D::unit(4).unwrap();
        let u = CellField::zeros(d);
        assert!(cn_step(&u, 0.0, &params(), &Mobility::Constant(1.0)).is_err());
        assert!(bdf1_step(&CellField::constant(d, f64::INFINITY), 0.1, &params(), &Mobility::Constant(1.0)).is_err());
    }

    #[test]
    fn equilibria_are_fixed_points() {
        let d = Domain2D::unit(6).unwrap();
        for model in [Mobility::Constant(1.0), Mobility::Degenerate] {
            for c in [-1.0, 0.0, 1.0] {
                let u = CellField::constant(d, c);
                let (b, _) = bdf1_step(&u, 0.3, &params(), &model).unwrap();
                assert!(b.as_slice().iter().all(|v| (v - c).abs() < 1e-13), "bdf1 {c}");
                let out = cn_step(&u, 0.3, &params(), &model).unwrap();
                assert!(out.half_state.as_slice().iter().all(|v| (v - c).abs() < 1e-13));
                assert!(out.next_state.as_slice().iter().all(|v| (v - c).abs() < 1e-13), "cn {c}");
            }
        }
    }

    #[test]
    fn half_state_is_half_step_predictor() {
        let d = Domain2D::unit(8).unwrap();
        let u = CellField::from_fn(d, |x, y| 0.5 * (3.0 * x).cos() * (2.0 * y).cos());
        let model = Mobility::Degenerate;
        let out = cn_step(&u, 0.2, &params(), &model).unwrap();
        let (pred, _) = bdf1_step(&u, 0.1, &params(), &model).unwrap();
        assert_eq!(out.half_state, pred);
    }

    #[test]
    fn step_doubling_error_is_third_order() {
        let d = Domain2D::unit(16).unwrap();
        let u = CellField::from_fn(d, |x, y| 0.4 * (3.0 * x).cos() * (2.0 * y).cos() + 0.2 * (5.0 * x).cos());
        let p = SchemeParams::new(0.05, 2.0, 2.0).unwrap();
        let model = Mobility::Constant(1.0);
        let defect = |tau: f64| {
            let one = cn_step(&u, tau, &p, &model).unwrap().next_state;
            let a = cn_step(&u, 0.5 * tau, &p, &model).unwrap().next_state;
            let two = cn_step(&a, 0.5 * tau, &p, &model).unwrap().next_state;
            norm_l2(&one.difference(&two))
        };
        let taus = [0.04, 0.02, 0.01];
        let errs: Vec<f64> = taus.iter().map(|&t| defect(t)).collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 2.6 && order < 3.4, "local order {order}, errors {errs:?}");
        }
    }

    #[test]
    fn unconditional_regime_preserves_bounds_at_large_steps() {
        let d = Domain2D::unit(16).unwrap();
        let h = d.spacing();
        let eps = 0.08;
        let model = Mobility::Degenerate;
        let s1 = 0.8;
        let s2 = crate::mobility::s2_lower_bound(s1, 1.0, eps, h);
        let p = SchemeParams::new(eps, s1, s2).unwrap();
        // Data exactly at 1 would sit where the degenerate mobility turns
        // negative under roundoff, so the plateau is kept strictly inside.
        let mut u = CellField::from_fn(d, |x, y| if (x - 0.5).powi(2) + (y - 0.4).powi(2) < 0.1 { 0.95 } else { -0.9 });
        for _ in 0..20 {
            u = cn_step(&u, 5.0, &p, &model).unwrap().next_state;
            assert!(norm_sup(&u) <= 1.0 + 1e-8);
        }
    }
}
