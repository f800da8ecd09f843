//! Trajectory drivers over uniform, prescribed nonuniform, and adaptive time
//! grids, with per-step monitoring of the sup-norm and the discrete energy.

use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::grid::{gradient_energy, norm_sup, CellField};
use crate::mobility::{DoubleWell, MobilityModel};
use crate::rng::SeededStream;
use crate::scheme::{cn_step, SchemeParams};

/// Discrete free energy `(ε²/2)[∇Φ, ∇Φ] + <F(Φ), 1>`.
pub fn discrete_energy(state: &CellField, eps: f64) -> f64 {
    let h = state.domain().spacing();
    let potential: f64 = state.as_slice().iter().map(|&v| DoubleWell::value(v)).sum();
    0.5 * eps * eps * gradient_energy(state) + h * h * potential
}

/// A partition `0 = t₀ < t₁ < … < t_N = T` given by its step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    steps: Vec<f64>,
}

impl TimeGrid {
    pub fn new(steps: Vec<f64>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::param("steps", "time grid needs at least one step"));
        }
        if let Some(bad) = steps.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::param("steps", format!("step sizes must be positive, got {bad}")));
        }
        Ok(Self { steps })
    }

    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::param("horizon", format!("must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::param("steps", "need at least one step"));
        }
        Self::new(vec![horizon / n_steps as f64; n_steps])
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.steps.iter().sum()
    }

    /// Cumulative times `t₁, …, t_N`.
    pub fn times(&self) -> Vec<f64> {
        self.steps
            .iter()
            .scan(0.0, |t, dt| {
                *t += dt;
                Some(*t)
            })
            .collect()
    }

    pub fn max_step(&self) -> f64 {
        self.steps.iter().copied().fold(0.0, f64::max)
    }

    /// Adjacent ratios `γ_n = τ_n / τ_{n-1}`, `n ≥ 2`.
    pub fn ratios(&self) -> Vec<f64> {
        self.steps.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// Largest adjacent ratio, or 1 for a single step.
    pub fn max_ratio(&self) -> f64 {
        self.ratios().into_iter().fold(1.0, f64::max)
    }
}

/// Randomly perturbed partition of `[0, horizon]` into `n_steps` steps.
///
/// Raw steps are `(1 + amplitude σ_k) / n_steps` with `σ_k` uniform in
/// `[-1, 1)` from the seeded stream, then rescaled to sum to `horizon`.
pub fn perturbed_mesh(n_steps: usize, amplitude: f64, seed: u64, horizon: f64) -> Result<TimeGrid> {
    if n_steps == 0 {
        return Err(Error::param("steps", "need at least one step"));
    }
    if !(0.0..1.0).contains(&amplitude) {
        return Err(Error::param("amplitude", format!("must lie in [0, 1), got {amplitude}")));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::param("horizon", format!("must be positive, got {horizon}")));
    }
    if amplitude == 0.0 {
        return TimeGrid::uniform(horizon, n_steps);
    }
    let mut stream = SeededStream::new(seed);
    let raw: Vec<f64> = (0..n_steps)
        .map(|_| (1.0 + amplitude * stream.next_symmetric()) / n_steps as f64)
        .collect();
    let scale = horizon / raw.iter().sum::<f64>();
    TimeGrid::new(raw.into_iter().map(|w| w * scale).collect())
}

/// Parameters of the energy-variation step controller
/// `τ = max(τ_min, τ_max / sqrt(1 + α |E'|²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveParams {
    pub tau_min: f64,
    pub tau_max: f64,
    pub alpha: f64,
}

impl AdaptiveParams {
    pub fn new(tau_min: f64, tau_max: f64, alpha: f64) -> Result<Self> {
        if !(tau_min.is_finite() && tau_min > 0.0) {
            return Err(Error::param("tau_min", "must be positive"));
        }
        if !(tau_max.is_finite() && tau_max >= tau_min) {
            return Err(Error::param("tau_max", "must be at least tau_min"));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::param("alpha", "must be positive"));
        }
        Ok(Self {
            tau_min,
            tau_max,
            alpha,
        })
    }

    pub fn next_step(&self, energy_rate: f64) -> f64 {
        let tau = self.tau_max / (1.0 + self.alpha * energy_rate * energy_rate).sqrt();
        // NaN or overflowed rates fall back to the floor.
        if tau.is_nan() {
            self.tau_min
        } else {
            tau.max(self.tau_min)
        }
    }
}

/// One monitored step. Row 0 holds the initial state with `tau = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRow {
    pub step: usize,
    pub t: f64,
    pub tau: f64,
    pub sup_norm: f64,
    pub energy: f64,
    pub pred_iters: usize,
    pub corr_iters: usize,
    pub mbp_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlowUpCause {
    /// The step produced NaN or infinite values.
    NonFinite,
    /// A linear solve failed from a state already outside `[-1, 1]`.
    SolverBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunOutcome {
    Completed,
    /// The attempted step `step` ending at `t` could not produce a usable state.
    BlowUp { step: usize, t: f64, cause: BlowUpCause },
    /// Stopped under `strict_mbp` at the first row exceeding the bound.
    MbpViolation { step: usize, t: f64, sup_norm: f64 },
    /// The observer asked to stop after row `step`.
    Stopped { step: usize, t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<StepRow>,
    /// Last finite state reached.
    pub terminal: CellField,
    pub outcome: RunOutcome,
}

impl RunRecord {
    pub fn final_time(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t)
    }

    pub fn max_sup_norm(&self) -> f64 {
        self.rows.iter().map(|r| r.sup_norm).fold(0.0, f64::max)
    }

    pub fn is_blow_up(&self) -> bool {
        matches!(self.outcome, RunOutcome::BlowUp { .. })
    }

    /// Largest row-to-row energy increase (negative when strictly dissipative).
    pub fn max_energy_increase(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].energy - w[0].energy)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Stop at the first row whose sup-norm exceeds `1 + mbp_slack`.
    pub strict_mbp: bool,
    pub mbp_slack: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            strict_mbp: false,
            mbp_slack: 1e-8,
        }
    }
}

/// Observer invoked after every recorded row with the corresponding state.
pub type Observer<'a> = dyn FnMut(&StepRow, &CellField) -> ControlFlow<()> + 'a;

/// Runs Crank-Nicolson steps over a prescribed time grid.
pub fn run<M: MobilityModel + ?Sized>(
    initial: &CellField,
    grid: &TimeGrid,
    params: &SchemeParams,
    model: &M,
) -> Result<RunRecord> {
    run_with(initial, grid, params, model, &RunOptions::default(), &mut |_, _| ControlFlow::Continue(()))
}

pub fn run_with<M: MobilityModel + ?Sized>(
    initial: &CellField,
    grid: &TimeGrid,
    params: &SchemeParams,
    model: &M,
    opts: &RunOptions,
    observer: &mut Observer<'_>,
) -> Result<RunRecord> {
    let steps = grid.steps();
    drive(initial, params, model, opts, observer, |rows| steps.get(rows.len() - 1).copied())
}

/// Runs Crank-Nicolson steps to `horizon` with energy-variation step control.
///
/// The first step uses `tau_min`. Later steps use the backward difference of
/// the discrete energy over the previous step as `E'(t)`. The final step is
/// shortened to land on `horizon` and may therefore be below `tau_min`.
pub fn run_adaptive<M: MobilityModel + ?Sized>(
    initial: &CellField,
    horizon: f64,
    ap: &AdaptiveParams,
    params: &SchemeParams,
    model: &M,
) -> Result<RunRecord> {
    run_adaptive_with(
        initial,
        horizon,
        ap,
        params,
        model,
        &RunOptions::default(),
        &mut |_, _| ControlFlow::Continue(()),
    )
}

pub fn run_adaptive_with<M: MobilityModel + ?Sized>(
    initial: &CellField,
    horizon: f64,
    ap: &AdaptiveParams,
    params: &SchemeParams,
    model: &M,
    opts: &RunOptions,
    observer: &mut Observer<'_>,
) -> Result<RunRecord> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::param("horizon", format!("must be positive, got {horizon}")));
    }
    let ap = *ap;
    drive(initial, params, model, opts, observer, move |rows| {
        let last = rows.last().expect("initial row is always present");
        let remaining = horizon - last.t;
        if remaining <= 1e-12 * horizon {
            return None;
        }
        let tau = match rows {
            [.., prev, cur] => ap.next_step((cur.energy - prev.energy) / cur.tau),
            _ => ap.tau_min,
        };
        Some(tau.min(remaining))
    })
}

fn drive<M: MobilityModel + ?Sized>(
    initial: &CellField,
    params: &SchemeParams,
    model: &M,
    opts: &RunOptions,
    observer: &mut Observer<'_>,
    mut next_tau: impl FnMut(&[StepRow]) -> Option<f64>,
) -> Result<RunRecord> {
    params.validate()?;
    if !initial.is_finite() {
        return Err(Error::param("initial", "entries must be finite"));
    }
    let sup0 = norm_sup(initial);
    let mut rows = vec![StepRow {
        step: 0,
        t: 0.0,
        tau: 0.0,
        sup_norm: sup0,
        energy: discrete_energy(initial, params.eps),
        pred_iters: 0,
        corr_iters: 0,
        mbp_margin: 1.0 - sup0,
    }];
    let mut state = initial.clone();
    let finish = |rows, state, outcome| RunRecord {
        rows,
        terminal: state,
        outcome,
    };

    if observer(&rows[0], &state).is_break() {
        return Ok(finish(rows, state, RunOutcome::Stopped { step: 0, t: 0.0 }));
    }

    while let Some(tau) = next_tau(&rows) {
        let last = *rows.last().expect("nonempty");
        let step = last.step + 1;
        let t = last.t + tau;
        let out = match cn_step(&state, tau, params, model) {
            Ok(out) => out,
            Err(Error::NonConvergence { .. }) if last.sup_norm > 1.0 + opts.mbp_slack => {
                let cause = BlowUpCause::SolverBreakdown;
                return Ok(finish(rows, state, RunOutcome::BlowUp { step, t, cause }));
            }
            Err(e) => return Err(e),
        };
        let next = out.next_state;
        let sup = norm_sup(&next);
        let energy = discrete_energy(&next, params.eps);
        if !next.is_finite() || !energy.is_finite() {
            let cause = BlowUpCause::NonFinite;
            return Ok(finish(rows, state, RunOutcome::BlowUp { step, t, cause }));
        }
        let row = StepRow {
            step,
            t,
            tau,
            sup_norm: sup,
            energy,
            pred_iters: out.predictor_report.iterations,
            corr_iters: out.corrector_report.iterations,
            mbp_margin: 1.0 - sup,
        };
        rows.push(row);
        state = next;
        if opts.strict_mbp && sup > 1.0 + opts.mbp_slack {
            let outcome = RunOutcome::MbpViolation { step, t, sup_norm: sup };
            return Ok(finish(rows, state, outcome));
        }
        if observer(&row, &state).is_break() {
            return Ok(finish(rows, state, RunOutcome::Stopped { step, t }));
        }
    }
    Ok(finish(rows, state, RunOutcome::Completed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain2D;
    use crate::mobility::Mobility;

    #[test]
    fn energy_of_constant_states() {
        let d = Domain2D::unit(8).unwrap();
        assert_eq!(discrete_energy(&CellField::constant(d, 1.0), 0.1), 0.0);
        assert_eq!(discrete_energy(&CellField::constant(d, -1.0), 0.1), 0.0);
        assert!((discrete_energy(&CellField::zeros(d), 0.1) - 0.25).abs() < 1e-14);
        let d2 = Domain2D::new(2.0, 8).unwrap();
        assert!((discrete_energy(&CellField::zeros(d2), 0.1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.0]).is_err());
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.steps(), &[0.25; 4]);
        assert_eq!(g.times(), vec![0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.max_ratio(), 1.0);
    }

    #[test]
    fn perturbed_mesh_properties() {
        let g = perturbed_mesh(10, 0.0, 3, 1.0).unwrap();
        assert_eq!(g, TimeGrid::uniform(1.0, 10).unwrap());

        let a = perturbed_mesh(10, 0.4, 42, 1.0).unwrap();
        let b = perturbed_mesh(10, 0.4, 42, 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, perturbed_mesh(10, 0.4, 43, 1.0).unwrap());
        assert!((a.horizon() - 1.0).abs() <= 1e-12);
        for gamma in a.ratios() {
            assert!((3.0 / 7.0..=7.0 / 3.0).contains(&gamma), "{gamma}");
        }
        assert!(perturbed_mesh(10, 1.0, 1, 1.0).is_err());
        assert!(perturbed_mesh(0, 0.4, 1, 1.0).is_err());
    }

    #[test]
    fn adaptive_step_formula() {
        let ap = AdaptiveParams::new(1e-5, 0.1, 1e5).unwrap();
        assert_eq!(ap.next_step(0.0), 0.1);
        assert!((ap.next_step(0.01) - 0.1 / 11.0_f64.sqrt()).abs() < 1e-15);
        assert!((ap.next_step(0.01) - 0.0301511).abs() < 1e-7);
        assert_eq!(ap.next_step(1e6), 1e-5);
        assert_eq!(ap.next_step(f64::INFINITY), 1e-5);
        assert!(AdaptiveParams::new(0.1, 0.01, 1.0).is_err());
        assert!(AdaptiveParams::new(1e-3, 0.01, 0.0).is_err());
    }

    #[test]
    fn zero_state_run_is_stationary() {
        let d = Domain2D::unit(6).unwrap();
        let p = SchemeParams::new(0.1, 2.0, 2.0).unwrap();
        let grid = perturbed_mesh(7, 0.4, 5, 2.0).unwrap();
        let rec = run(&CellField::zeros(d), &grid, &p, &Mobility::Constant(1.0)).unwrap();
        assert_eq!(rec.outcome, RunOutcome::Completed);
        assert_eq!(rec.rows.len(), 8);
        for r in &rec.rows {
            assert!((r.energy - 0.25).abs() < 1e-14);
            assert_eq!(r.sup_norm, 0.0);
        }
        assert!((rec.final_time() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_run_lands_on_horizon() {
        let d = Domain2D::unit(8).unwrap();
        let p = SchemeParams::new(0.05, 2.0, 2.0).unwrap();
        let ap = AdaptiveParams::new(1e-3, 0.05, 1e3).unwrap();
        let u = CellField::from_fn(d, |x, y| 0.3 * (3.0 * x).cos() * (2.0 * y).cos());
        let rec = run_adaptive(&u, 0.7, &ap, &p, &Mobility::Constant(1.0)).unwrap();
        assert_eq!(rec.outcome, RunOutcome::Completed);
        assert_eq!(rec.final_time(), 0.7);
        assert_eq!(rec.rows[1].tau, 1e-3);
        let n = rec.rows.len();
        for r in &rec.rows[1..n - 1] {
            assert!(r.tau >= ap.tau_min && r.tau <= ap.tau_max);
        }
        assert!(rec.rows[n - 1].tau <= ap.tau_max);
    }

    #[test]
    fn observer_can_stop_and_strict_mode_halts() {
        let d = Domain2D::unit(6).unwrap();
        let p = SchemeParams::new(0.1, 2.0, 2.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let u = CellField::from_fn(d, |x, _| 0.5 * (3.0 * x).cos());
        let rec = run_with(&u, &grid, &p, &Mobility::Constant(1.0), &RunOptions::default(), &mut |row, _| {
            if row.step == 3 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert!(matches!(rec.outcome, RunOutcome::Stopped { step: 3, .. }));
        assert_eq!(rec.rows.len(), 4);

        let strict = RunOptions {
            strict_mbp: true,
            ..RunOptions::default()
        };
        let over = CellField::from_fn(d, |x, _| 1.5 * (3.0 * x).cos());
        let rec = run_with(&over, &grid, &p, &Mobility::Constant(1.0), &strict, &mut |_, _| ControlFlow::Continue(()))
            .unwrap();
        assert!(matches!(rec.outcome, RunOutcome::MbpViolation { step: 1, .. }));
    }
}
