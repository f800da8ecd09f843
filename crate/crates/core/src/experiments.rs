//! Initial conditions and the benchmark problems: the temporal convergence
//! ladder, grain coarsening with degenerate mobility, and the shrinking bubble.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::ControlFlow;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{norm_h1, norm_sup, CellField, Domain2D};
use crate::mobility::{s1_lower_bound, s2_lower_bound, Mobility, MobilityModel};
use crate::rng::SeededStream;
use crate::scheme::SchemeParams;
use crate::stepping::{
    perturbed_mesh, run_adaptive_with, run_with, AdaptiveParams, RunOptions, RunRecord, TimeGrid,
};

/// `0.1 (cos 3x cos 2y + cos 5x cos 5y)` at cell centers.
pub fn init_trig(domain: Domain2D) -> CellField {
    CellField::from_fn(domain, |x, y| {
        0.1 * ((3.0 * x).cos() * (2.0 * y).cos() + (5.0 * x).cos() * (5.0 * y).cos())
    })
}

/// Independent uniform values on `[-amplitude, amplitude]`, drawn in row-major order.
pub fn init_random(domain: Domain2D, seed: u64, amplitude: f64) -> Result<CellField> {
    if !(0.0..=1.0).contains(&amplitude) {
        return Err(Error::param("amplitude", format!("must lie in [0, 1], got {amplitude}")));
    }
    let mut stream = SeededStream::new(seed);
    let values = (0..domain.len()).map(|_| amplitude * stream.next_symmetric()).collect();
    CellField::from_vec(domain, values)
}

/// `+1` strictly inside the disc of `radius` about the domain center, `-1` elsewhere.
pub fn init_bubble(domain: Domain2D, radius: f64) -> Result<CellField> {
    if !(radius > 0.0 && radius < 0.5 * domain.side_length()) {
        return Err(Error::param(
            "radius",
            format!("must lie in (0, {}), got {radius}", 0.5 * domain.side_length()),
        ));
    }
    let c = domain.origin() + 0.5 * domain.side_length();
    let r2 = radius * radius;
    Ok(CellField::from_fn(domain, |x, y| {
        if (x - c).powi(2) + (y - c).powi(2) < r2 {
            1.0
        } else {
            -1.0
        }
    }))
}

/// Radius of the disc whose area equals the area of cells with `φ > 0`.
pub fn bubble_radius(state: &CellField) -> f64 {
    let h = state.domain().spacing();
    let count = state.as_slice().iter().filter(|&&v| v > 0.0).count();
    (h * h * count as f64 / PI).sqrt()
}

/// `sqrt(R₀² - 2ε²t)`, or `None` once the bubble has vanished.
pub fn predicted_radius(r0: f64, eps: f64, t: f64) -> Option<f64> {
    let r2 = r0 * r0 - 2.0 * eps * eps * t;
    (r2 >= 0.0).then(|| r2.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshKind {
    Uniform,
    /// Perturbed meshes; the run with `N` steps uses seed `seed + N`.
    Perturbed { amplitude: f64, seed: u64 },
}

impl MeshKind {
    pub fn grid(&self, n_steps: usize, horizon: f64) -> Result<TimeGrid> {
        match *self {
            MeshKind::Uniform => TimeGrid::uniform(horizon, n_steps),
            MeshKind::Perturbed { amplitude, seed } => {
                perturbed_mesh(n_steps, amplitude, seed.wrapping_add(n_steps as u64), horizon)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub initial: CellField,
    pub mobility: Mobility,
    pub params: SchemeParams,
    pub horizon: f64,
    /// Strictly increasing step counts `N`; each is compared against `2N`.
    pub ladder: Vec<usize>,
    pub mesh: MeshKind,
}

impl ConvergenceConfig {
    fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() || self.ladder.contains(&0) {
            return Err(Error::param("ladder", "needs at least one positive step count"));
        }
        if self.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("ladder", "step counts must be strictly increasing"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::param("horizon", "must be positive"));
        }
        self.params.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n_steps: usize,
    /// Largest adjacent step ratio over the `N` and `2N` meshes.
    pub max_ratio: f64,
    pub err_h1: f64,
    pub err_sup: f64,
    /// `None` on the first row.
    pub order_h1: Option<f64>,
    pub order_sup: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Every distinct run, keyed by its step count.
    pub runs: BTreeMap<usize, RunRecord>,
}

fn observed_order(e_prev: f64, e_cur: f64, n_prev: usize, n_cur: usize) -> f64 {
    (e_prev / e_cur).ln() / (n_cur as f64 / n_prev as f64).ln()
}

/// Runs the ladder with the Crank-Nicolson driver.
pub fn convergence_study(cfg: &ConvergenceConfig) -> Result<ConvergenceStudy> {
    let model = cfg.mobility;
    let params = cfg.params;
    convergence_study_with(cfg, |initial, grid| crate::stepping::run(initial, grid, &params, &model))
}

/// Runs the ladder with a caller-supplied propagator.
///
/// The distinct runs (`N` and `2N` for every rung) are independent and are
/// executed in parallel.
pub fn convergence_study_with<P>(cfg: &ConvergenceConfig, propagate: P) -> Result<ConvergenceStudy>
where
    P: Fn(&CellField, &TimeGrid) -> Result<RunRecord> + Sync,
{
    cfg.validate()?;
    let mut counts: Vec<usize> = cfg.ladder.iter().flat_map(|&n| [n, 2 * n]).collect();
    counts.sort_unstable();
    counts.dedup();

    let grids: Vec<(usize, TimeGrid)> = counts
        .iter()
        .map(|&n| Ok((n, cfg.mesh.grid(n, cfg.horizon)?)))
        .collect::<Result<_>>()?;
    let results: Vec<(usize, f64, RunRecord)> = grids
        .par_iter()
        .map(|(n, grid)| Ok((*n, grid.max_ratio(), propagate(&cfg.initial, grid)?)))
        .collect::<Result<_>>()?;

    let mut ratios = BTreeMap::new();
    let mut runs = BTreeMap::new();
    for (n, ratio, record) in results {
        if !matches!(record.outcome, crate::stepping::RunOutcome::Completed) {
            return Err(Error::Evaluation(format!("run with {n} steps ended with {:?}", record.outcome)));
        }
        ratios.insert(n, ratio);
        runs.insert(n, record);
    }

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(cfg.ladder.len());
    for &n in &cfg.ladder {
        let diff = runs[&n].terminal.difference(&runs[&(2 * n)].terminal);
        let err_h1 = norm_h1(&diff);
        let err_sup = norm_sup(&diff);
        let (order_h1, order_sup) = match rows.last() {
            Some(prev) => (
                Some(observed_order(prev.err_h1, err_h1, prev.n_steps, n)),
                Some(observed_order(prev.err_sup, err_sup, prev.n_steps, n)),
            ),
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            n_steps: n,
            max_ratio: ratios[&n].max(ratios[&(2 * n)]),
            err_h1,
            err_sup,
            order_h1,
            order_sup,
        });
    }
    Ok(ConvergenceStudy { rows, runs })
}

/// How the second stabilizer is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum S2Choice {
    /// The smallest value giving unconditional bound preservation.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepping {
    Uniform { tau: f64 },
    Adaptive(AdaptiveParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleConfig {
    pub cells: usize,
    pub side_length: f64,
    pub eps: f64,
    pub radius: f64,
    pub adaptive: AdaptiveParams,
    /// `None` selects the computed lower bound.
    pub s1: Option<f64>,
    pub s2: S2Choice,
    /// Radius sampling interval in time.
    pub sample_every: f64,
    /// Stop here if the bubble has not vanished yet.
    pub horizon: f64,
}

impl Default for BubbleConfig {
    fn default() -> Self {
        Self {
            cells: 256,
            side_length: 1.0,
            eps: 0.01,
            radius: 0.2,
            adaptive: AdaptiveParams {
                tau_min: 1e-5,
                tau_max: 0.01,
                alpha: 1e5,
            },
            s1: None,
            s2: S2Choice::Auto,
            sample_every: 1.0,
            horizon: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleSample {
    pub t: f64,
    pub measured: f64,
    pub predicted: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BubbleReport {
    pub samples: Vec<BubbleSample>,
    /// First time with `max φ < 0`, if reached before the horizon.
    pub vanish_time: Option<f64>,
    pub record: RunRecord,
}

fn resolve_params<M: MobilityModel>(model: &M, eps: f64, h: f64, s1: Option<f64>, s2: S2Choice) -> Result<SchemeParams> {
    let s1 = match s1 {
        Some(v) => v,
        None => s1_lower_bound(model)?,
    };
    let s2 = match s2 {
        S2Choice::Auto => s2_lower_bound(s1, model.max_on_unit_interval(), eps, h),
        S2Choice::Value(v) => v,
    };
    SchemeParams::new(eps, s1, s2)
}

/// Shrinking bubble under constant mobility with adaptive stepping.
pub fn bubble_benchmark(cfg: &BubbleConfig) -> Result<BubbleReport> {
    bubble_benchmark_with(cfg, &mut |_, _| ControlFlow::Continue(()))
}

/// As [`bubble_benchmark`], forwarding every step to `observer`.
pub fn bubble_benchmark_with(
    cfg: &BubbleConfig,
    observer: &mut crate::stepping::Observer<'_>,
) -> Result<BubbleReport> {
    if !(cfg.sample_every.is_finite() && cfg.sample_every > 0.0) {
        return Err(Error::param("sample_every", "must be positive"));
    }
    let domain = Domain2D::centered(cfg.side_length, cfg.cells)?;
    let model = Mobility::Constant(1.0);
    let params = resolve_params(&model, cfg.eps, domain.spacing(), cfg.s1, cfg.s2)?;
    let initial = init_bubble(domain, cfg.radius)?;

    let mut samples = Vec::new();
    let mut next_sample = 0.0;
    let mut vanish_time = None;
    let record = run_adaptive_with(
        &initial,
        cfg.horizon,
        &cfg.adaptive,
        &params,
        &model,
        &RunOptions::default(),
        &mut |row, state| {
            if row.t >= next_sample - 1e-9 * cfg.sample_every {
                samples.push(BubbleSample {
                    t: row.t,
                    measured: bubble_radius(state),
                    predicted: predicted_radius(cfg.radius, cfg.eps, row.t),
                });
                while next_sample <= row.t + 1e-9 * cfg.sample_every {
                    next_sample += cfg.sample_every;
                }
            }
            if observer(row, state).is_break() {
                return ControlFlow::Break(());
            }
            if state.max() < 0.0 {
                vanish_time = Some(row.t);
                return ControlFlow::Break(());
            }
            ControlFlow::Continue(())
        },
    )?;
    if let (Some(t), Some(last)) = (vanish_time, samples.last()) {
        if last.t < t {
            samples.push(BubbleSample {
                t,
                measured: bubble_radius(&record.terminal),
                predicted: predicted_radius(cfg.radius, cfg.eps, t),
            });
        }
    }
    Ok(BubbleReport {
        samples,
        vanish_time,
        record,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseningConfig {
    pub cells: usize,
    pub side_length: f64,
    /// `None` sets `ε = h`.
    pub eps: Option<f64>,
    pub s1: f64,
    pub s2: S2Choice,
    pub stepping: Stepping,
    pub horizon: f64,
    pub seed: u64,
    pub amplitude: f64,
    pub options: RunOptions,
}

impl Default for CoarseningConfig {
    fn default() -> Self {
        Self {
            cells: 256,
            side_length: 1.0,
            eps: None,
            s1: 0.8,
            s2: S2Choice::Auto,
            stepping: Stepping::Uniform { tau: 1.0 },
            horizon: 100.0,
            seed: 20240601,
            amplitude: 0.1,
            options: RunOptions::default(),
        }
    }
}

impl CoarseningConfig {
    /// The deliberately unstable configuration: `S₂ = 0`, `τ = 2`.
    pub fn unstable() -> Self {
        Self {
            s2: S2Choice::Value(0.0),
            stepping: Stepping::Uniform { tau: 2.0 },
            ..Self::default()
        }
    }

    pub fn domain(&self) -> Result<Domain2D> {
        Domain2D::new(self.side_length, self.cells)
    }

    pub fn params(&self) -> Result<SchemeParams> {
        let d = self.domain()?;
        let eps = self.eps.unwrap_or(d.spacing());
        resolve_params(&Mobility::Degenerate, eps, d.spacing(), Some(self.s1), self.s2)
    }
}

/// Grain coarsening from random data with degenerate mobility.
///
/// A blow-up is reported through the record's outcome.
pub fn coarsening_benchmark(cfg: &CoarseningConfig) -> Result<RunRecord> {
    coarsening_benchmark_with(cfg, &mut |_, _| ControlFlow::Continue(()))
}

pub fn coarsening_benchmark_with(
    cfg: &CoarseningConfig,
    observer: &mut crate::stepping::Observer<'_>,
) -> Result<RunRecord> {
    let domain = cfg.domain()?;
    let params = cfg.params()?;
    let initial = init_random(domain, cfg.seed, cfg.amplitude)?;
    let model = Mobility::Degenerate;
    match cfg.stepping {
        Stepping::Uniform { tau } => {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::param("tau", "must be positive"));
            }
            let n = (cfg.horizon / tau).round().max(1.0) as usize;
            let grid = TimeGrid::uniform(cfg.horizon, n)?;
            run_with(&initial, &grid, &params, &model, &cfg.options, observer)
        }
        Stepping::Adaptive(ap) => {
            run_adaptive_with(&initial, cfg.horizon, &ap, &params, &model, &cfg.options, observer)
        }
    }
}
