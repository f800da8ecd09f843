//! Run configuration: a flat `key = value` text format with `#` comments.
//!
//! Unknown and duplicate keys are rejected. Values given as overrides (for
//! example from command-line flags) replace file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::{init_bubble, init_random, init_trig};
use crate::grid::{CellField, Domain2D};
use crate::linsolve::SolverConfig;
use crate::mobility::{s1_lower_bound, s2_lower_bound, Mobility, MobilityModel};
use crate::scheme::SchemeParams;
use crate::stepping::{perturbed_mesh, AdaptiveParams, RunOptions, TimeGrid};

pub const KEYS: &[&str] = &[
    "side_length",
    "cells",
    "centered",
    "mobility",
    "mobility_scale",
    "eps",
    "s1",
    "auto_s1",
    "s2",
    "auto_s2",
    "stepping",
    "steps",
    "mesh_seed",
    "mesh_amplitude",
    "tau_min",
    "tau_max",
    "alpha",
    "horizon",
    "initial",
    "init_seed",
    "init_amplitude",
    "bubble_radius",
    "timeseries",
    "snapshot_dir",
    "snapshot_every",
    "snapshot_binary",
    "strict_mbp",
    "solver.rel_tol",
    "solver.abs_tol",
    "solver.max_iters",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    Uniform { steps: usize },
    Nonuniform { steps: usize, seed: u64, amplitude: f64 },
    Adaptive(AdaptiveParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Trig,
    Random { seed: u64, amplitude: f64 },
    Bubble { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputConfig {
    pub timeseries: Option<PathBuf>,
    pub snapshot_dir: Option<PathBuf>,
    /// Write a snapshot every this many steps; 0 writes only the first and last.
    pub snapshot_every: usize,
    pub snapshot_binary: bool,
}

/// A fully validated run configuration with stabilizers resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: Domain2D,
    pub centered: bool,
    pub mobility: Mobility,
    pub params: SchemeParams,
    pub stepping: StepMode,
    pub horizon: f64,
    pub initial: InitialCondition,
    pub outputs: OutputConfig,
    pub strict_mbp: bool,
}

/// Raw key-value pairs before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigPairs {
    values: BTreeMap<String, String>,
}

impl ConfigPairs {
    /// Parses file text. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            check_key(key)?;
            if pairs.values.contains_key(key) {
                return Err(Error::config(key, format!("duplicate key at line {line_no}")));
            }
            pairs.values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(pairs)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets `key`, replacing any existing value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        check_key(key)?;
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "expected key=value"))?;
        self.set(k.trim(), v)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse `{v}`"))),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(Error::config(key, format!("expected a boolean, got `{v}`"))),
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.parsed(key, default)?;
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::config(key, format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    /// Stabilizer value, or `None` when it should be computed.
    fn stabilizer(&self, key: &str, auto_key: &str) -> Result<Option<f64>> {
        let auto = self.flag(auto_key, self.get(key).is_none())?;
        match (self.get(key), auto) {
            (Some("auto"), _) | (None, true) => Ok(None),
            (None, false) => Err(Error::config(key, format!("required when `{auto_key}` is false"))),
            (Some(_), true) if self.get(auto_key).is_some() => {
                Err(Error::config(auto_key, format!("conflicts with an explicit `{key}`")))
            }
            (Some(_), _) => {
                let v: f64 = self.parsed(key, 0.0)?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::config(key, format!("must be nonnegative, got {v}")));
                }
                Ok(Some(v))
            }
        }
    }

    /// Validates every value and resolves automatic stabilizers.
    pub fn resolve(&self) -> Result<RunConfig> {
        let side = self.positive("side_length", 1.0)?;
        let cells: usize = self.parsed("cells", 64)?;
        let centered = self.flag("centered", false)?;
        let domain = if centered {
            Domain2D::centered(side, cells)
        } else {
            Domain2D::new(side, cells)
        }
        .map_err(|e| Error::config("cells", e.to_string()))?;

        let mobility = match self.get("mobility").unwrap_or("constant") {
            "constant" => Mobility::constant(self.positive("mobility_scale", 1.0)?)
                .map_err(|e| Error::config("mobility_scale", e.to_string()))?,
            "degenerate" => {
                if self.get("mobility_scale").is_some() {
                    return Err(Error::config("mobility_scale", "only applies to constant mobility"));
                }
                Mobility::Degenerate
            }
            other => {
                return Err(Error::config(
                    "mobility",
                    format!("expected `constant` or `degenerate`, got `{other}`"),
                ))
            }
        };

        let eps = self.positive("eps", 0.01)?;
        let h = domain.spacing();
        let s1 = match self.stabilizer("s1", "auto_s1")? {
            Some(v) => v,
            None => s1_lower_bound(&mobility)?,
        };
        let s2 = match self.stabilizer("s2", "auto_s2")? {
            Some(v) => v,
            None => s2_lower_bound(s1, mobility.max_on_unit_interval(), eps, h),
        };

        let solver = SolverConfig {
            rel_tolerance: self.positive("solver.rel_tol", SolverConfig::default().rel_tolerance)?,
            abs_tolerance: self.positive("solver.abs_tol", SolverConfig::default().abs_tolerance)?,
            max_iterations: match self.get("solver.max_iters") {
                None => None,
                Some(_) => {
                    let n: usize = self.parsed("solver.max_iters", 0)?;
                    if n == 0 {
                        return Err(Error::config("solver.max_iters", "must be positive"));
                    }
                    Some(n)
                }
            },
        };
        let params = SchemeParams::new(eps, s1, s2)
            .map(|p| p.with_solver(solver))
            .map_err(|e| Error::config("s1", e.to_string()))?;

        let horizon = self.positive("horizon", 1.0)?;
        let steps = || -> Result<usize> {
            let n: usize = self.parsed("steps", 100)?;
            if n == 0 {
                return Err(Error::config("steps", "must be positive"));
            }
            Ok(n)
        };
        let stepping = match self.get("stepping").unwrap_or("uniform") {
            "uniform" => StepMode::Uniform { steps: steps()? },
            "nonuniform" => {
                let amplitude: f64 = self.parsed("mesh_amplitude", 0.4)?;
                if !(0.0..1.0).contains(&amplitude) {
                    return Err(Error::config("mesh_amplitude", format!("must lie in [0, 1), got {amplitude}")));
                }
                StepMode::Nonuniform {
                    steps: steps()?,
                    seed: self.parsed("mesh_seed", 0)?,
                    amplitude,
                }
            }
            "adaptive" => {
                let tau_min = self.positive("tau_min", 1e-5)?;
                let tau_max = self.positive("tau_max", 0.01)?;
                let alpha = self.positive("alpha", 1e5)?;
                StepMode::Adaptive(
                    AdaptiveParams::new(tau_min, tau_max, alpha)
                        .map_err(|e| Error::config("tau_max", e.to_string()))?,
                )
            }
            other => {
                return Err(Error::config(
                    "stepping",
                    format!("expected `uniform`, `nonuniform` or `adaptive`, got `{other}`"),
                ))
            }
        };

        let initial = match self.get("initial").unwrap_or("trig") {
            "trig" => InitialCondition::Trig,
            "random" => {
                let amplitude: f64 = self.parsed("init_amplitude", 0.1)?;
                if !(0.0..=1.0).contains(&amplitude) {
                    return Err(Error::config("init_amplitude", format!("must lie in [0, 1], got {amplitude}")));
                }
                InitialCondition::Random {
                    seed: self.parsed("init_seed", 0)?,
                    amplitude,
                }
            }
            "bubble" => {
                let radius = self.positive("bubble_radius", 0.2)?;
                if radius >= 0.5 * side {
                    return Err(Error::config("bubble_radius", "must be below half the side length"));
                }
                InitialCondition::Bubble { radius }
            }
            other => {
                return Err(Error::config(
                    "initial",
                    format!("expected `trig`, `random` or `bubble`, got `{other}`"),
                ))
            }
        };

        let outputs = OutputConfig {
            timeseries: self.get("timeseries").map(PathBuf::from),
            snapshot_dir: self.get("snapshot_dir").map(PathBuf::from),
            snapshot_every: self.parsed("snapshot_every", 0)?,
            snapshot_binary: self.flag("snapshot_binary", false)?,
        };

        Ok(RunConfig {
            domain,
            centered,
            mobility,
            params,
            stepping,
            horizon,
            initial,
            outputs,
            strict_mbp: self.flag("strict_mbp", false)?,
        })
    }
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(Error::config(key, "unknown key"))
    }
}

/// Reads an optional file and applies `overrides` (`key=value`) on top.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut pairs = match path {
        Some(p) => ConfigPairs::read(p)?,
        None => ConfigPairs::default(),
    };
    for o in overrides {
        pairs.set_assignment(o)?;
    }
    pairs.resolve()
}

impl RunConfig {
    pub fn initial_state(&self) -> Result<CellField> {
        match self.initial {
            InitialCondition::Trig => Ok(init_trig(self.domain)),
            InitialCondition::Random { seed, amplitude } => init_random(self.domain, seed, amplitude),
            InitialCondition::Bubble { radius } => init_bubble(self.domain, radius),
        }
    }

    /// The prescribed time grid, or `None` for adaptive stepping.
    pub fn time_grid(&self) -> Result<Option<TimeGrid>> {
        match self.stepping {
            StepMode::Uniform { steps } => TimeGrid::uniform(self.horizon, steps).map(Some),
            StepMode::Nonuniform { steps, seed, amplitude } => {
                perturbed_mesh(steps, amplitude, seed, self.horizon).map(Some)
            }
            StepMode::Adaptive(_) => Ok(None),
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            strict_mbp: self.strict_mbp,
            ..RunOptions::default()
        }
    }

    /// Resolved values as `key = value` lines that parse back to this config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let d = &self.domain;
        let _ = writeln!(s, "side_length = {:?}", d.side_length());
        let _ = writeln!(s, "cells = {}", d.cells());
        let _ = writeln!(s, "centered = {}", self.centered);
        match self.mobility {
            Mobility::Constant(c) => {
                let _ = writeln!(s, "mobility = constant\nmobility_scale = {c:?}");
            }
            Mobility::Degenerate => {
                let _ = writeln!(s, "mobility = degenerate");
            }
        }
        let p = &self.params;
        let _ = writeln!(s, "eps = {:?}\ns1 = {:?}\ns2 = {:?}", p.eps, p.s1, p.s2);
        let _ = writeln!(s, "solver.rel_tol = {:?}", p.solver.rel_tolerance);
        let _ = writeln!(s, "solver.abs_tol = {:?}", p.solver.abs_tolerance);
        if let Some(n) = p.solver.max_iterations {
            let _ = writeln!(s, "solver.max_iters = {n}");
        }
        match self.stepping {
            StepMode::Uniform { steps } => {
                let _ = writeln!(s, "stepping = uniform\nsteps = {steps}");
            }
            StepMode::Nonuniform { steps, seed, amplitude } => {
                let _ = writeln!(
                    s,
                    "stepping = nonuniform\nsteps = {steps}\nmesh_seed = {seed}\nmesh_amplitude = {amplitude:?}"
                );
            }
            StepMode::Adaptive(a) => {
                let _ = writeln!(
                    s,
                    "stepping = adaptive\ntau_min = {:?}\ntau_max = {:?}\nalpha = {:?}",
                    a.tau_min, a.tau_max, a.alpha
                );
            }
        }
        let _ = writeln!(s, "horizon = {:?}", self.horizon);
        match self.initial {
            InitialCondition::Trig => {
                let _ = writeln!(s, "initial = trig");
            }
            InitialCondition::Random { seed, amplitude } => {
                let _ = writeln!(s, "initial = random\ninit_seed = {seed}\ninit_amplitude = {amplitude:?}");
            }
            InitialCondition::Bubble { radius } => {
                let _ = writeln!(s, "initial = bubble\nbubble_radius = {radius:?}");
            }
        }
        let o = &self.outputs;
        if let Some(p) = &o.timeseries {
            let _ = writeln!(s, "timeseries = {}", p.display());
        }
        if let Some(p) = &o.snapshot_dir {
            let _ = writeln!(s, "snapshot_dir = {}", p.display());
        }
        let _ = writeln!(s, "snapshot_every = {}", o.snapshot_every);
        let _ = writeln!(s, "snapshot_binary = {}", o.snapshot_binary);
        let _ = writeln!(s, "strict_mbp = {}", self.strict_mbp);
        s
    }
}
