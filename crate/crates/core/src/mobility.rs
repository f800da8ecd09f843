//! Mobility models, the double-well potential, and the stabilizer bounds that
//! make the Crank-Nicolson step bound-preserving.

use std::fmt;

use crate::error::{Error, Result};

/// Number of uniform samples on `[-1, 1]` used by the bound searches.
pub const BOUND_SAMPLES: usize = 100_001;

/// A scalar mobility `M(ρ)` with its derivative and range on `[-1, 1]`.
///
/// Implementations must supply the exact derivative; nothing here
/// differentiates numerically.
pub trait MobilityModel: fmt::Debug + Send + Sync {
    fn value(&self, rho: f64) -> f64;

    fn derivative(&self, rho: f64) -> f64;

    /// `L = max M` on `[-1, 1]`.
    fn max_on_unit_interval(&self) -> f64;

    /// `M₀ = min M` on `[-1, 1]`.
    fn min_on_unit_interval(&self) -> f64;

    /// Whether `M ≥ M₀ > 0` holds, as required by the energy-stability estimate
    /// for variable mobility. Degenerate models still preserve the bounds.
    fn is_nondegenerate(&self) -> bool {
        self.min_on_unit_interval() > 0.0
    }
}

/// The built-in mobilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mobility {
    /// `M(ρ) = c` with `c > 0`.
    Constant(f64),
    /// `M(ρ) = 1 - ρ²`, vanishing at the pure phases.
    Degenerate,
}

impl Mobility {
    pub fn constant(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::param("mobility_scale", format!("must be positive, got {scale}")));
        }
        Ok(Mobility::Constant(scale))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mobility::Constant(_) => "constant",
            Mobility::Degenerate => "degenerate",
        }
    }
}

impl MobilityModel for Mobility {
    #[inline]
    fn value(&self, rho: f64) -> f64 {
        match *self {
            Mobility::Constant(c) => c,
            Mobility::Degenerate => 1.0 - rho * rho,
        }
    }

    #[inline]
    fn derivative(&self, rho: f64) -> f64 {
        match *self {
            Mobility::Constant(_) => 0.0,
            Mobility::Degenerate => -2.0 * rho,
        }
    }

    fn max_on_unit_interval(&self) -> f64 {
        match *self {
            Mobility::Constant(c) => c,
            Mobility::Degenerate => 1.0,
        }
    }

    fn min_on_unit_interval(&self) -> f64 {
        match *self {
            Mobility::Constant(c) => c,
            Mobility::Degenerate => 0.0,
        }
    }
}

/// `F(ρ) = (1 - ρ²)² / 4`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleWell;

impl DoubleWell {
    #[inline]
    pub fn value(rho: f64) -> f64 {
        let w = 1.0 - rho * rho;
        0.25 * w * w
    }

    #[inline]
    pub fn derivative(rho: f64) -> f64 {
        rho * rho * rho - rho
    }

    #[inline]
    pub fn second_derivative(rho: f64) -> f64 {
        3.0 * rho * rho - 1.0
    }
}

/// Reaction term `f(ρ) = M(ρ) F'(ρ)`.
#[inline]
pub fn reaction<M: MobilityModel + ?Sized>(model: &M, rho: f64) -> f64 {
    model.value(rho) * DoubleWell::derivative(rho)
}

/// `f'(ρ) = M'(ρ) F'(ρ) + M(ρ) F''(ρ)`.
#[inline]
pub fn reaction_slope<M: MobilityModel + ?Sized>(model: &M, rho: f64) -> f64 {
    model.derivative(rho) * DoubleWell::derivative(rho)
        + model.value(rho) * DoubleWell::second_derivative(rho)
}

fn sample_point(k: usize) -> f64 {
    -1.0 + 2.0 * k as f64 / (BOUND_SAMPLES - 1) as f64
}

/// Smallest admissible `S₁`: `max f'(ρ)` over `[-1, 1]`.
///
/// Dense sampling locates the best sample, then golden-section search refines
/// inside the two neighbouring sample intervals.
pub fn s1_lower_bound<M: MobilityModel + ?Sized>(model: &M) -> Result<f64> {
    let g = |rho: f64| reaction_slope(model, rho);
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..BOUND_SAMPLES {
        let rho = sample_point(k);
        let v = g(rho);
        if !v.is_finite() {
            return Err(Error::Evaluation(format!(
                "M'(ρ)F'(ρ) + M(ρ)F''(ρ) is {v} at ρ = {rho}"
            )));
        }
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let lo = sample_point(best_k.saturating_sub(1));
    let hi = sample_point((best_k + 1).min(BOUND_SAMPLES - 1));
    let (_, refined) = golden_section_max(&g, lo, hi, 1e-14);
    if refined.is_finite() && refined > best {
        best = refined;
    }
    Ok(best)
}

/// Golden-section search for a maximum of `g` on `[lo, hi]`.
fn golden_section_max(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut ga = g(a);
    let mut gb = g(b);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if ga > gb {
            hi = b;
            b = a;
            gb = ga;
            a = hi - inv_phi * (hi - lo);
            ga = g(a);
        } else {
            lo = a;
            a = b;
            ga = gb;
            b = lo + inv_phi * (hi - lo);
            gb = g(b);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, g(x))
}

/// Smallest `S₂` giving unconditional bound preservation:
/// `(S₁/4 + L ε² / h²)²`.
pub fn s2_lower_bound(s1: f64, mobility_max: f64, eps: f64, h: f64) -> f64 {
    let a = s1 / 4.0 + mobility_max * eps * eps / (h * h);
    a * a
}

/// Largest step that keeps the scheme bound-preserving with `S₂ = 0`:
/// `2 / (S₁ + 4 L ε² / h²)`. Infinite when the denominator vanishes.
pub fn tau_max_conditional(s1: f64, mobility_max: f64, eps: f64, h: f64) -> f64 {
    let denom = s1 + 4.0 * mobility_max * eps * eps / (h * h);
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        2.0 / denom
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizedBoundReport {
    pub s1: f64,
    /// `max |S₁ρ - f(ρ)|` over the samples.
    pub max_deviation: f64,
    /// Where the maximum was attained.
    pub argmax: f64,
    pub passed: bool,
}

impl StabilizedBoundReport {
    pub fn margin(&self) -> f64 {
        self.s1 - self.max_deviation
    }
}

/// Samples `|S₁ρ - f(ρ)| ≤ S₁` on `[-1, 1]`.
pub fn check_stabilized_bound<M: MobilityModel + ?Sized>(model: &M, s1: f64) -> StabilizedBoundReport {
    let mut max_deviation = 0.0_f64;
    let mut argmax = 0.0;
    for k in 0..BOUND_SAMPLES {
        let rho = sample_point(k);
        let v = (s1 * rho - reaction(model, rho)).abs();
        if !(v <= max_deviation) {
            max_deviation = v;
            argmax = rho;
        }
    }
    StabilizedBoundReport {
        s1,
        max_deviation,
        argmax,
        passed: max_deviation <= s1 + 1e-12,
    }
}

/// Checks that the declared range of a model covers its sampled values.
pub fn check_declared_range<M: MobilityModel + ?Sized>(model: &M) -> Result<()> {
    let lo = model.min_on_unit_interval();
    let hi = model.max_on_unit_interval();
    if lo < 0.0 {
        return Err(Error::param("mobility", format!("declared minimum {lo} is negative")));
    }
    for k in 0..BOUND_SAMPLES {
        let rho = sample_point(k);
        let v = model.value(rho);
        if !v.is_finite() || v < lo - 1e-12 || v > hi + 1e-12 {
            return Err(Error::param(
                "mobility",
                format!("M({rho}) = {v} outside declared range [{lo}, {hi}]"),
            ));
        }
    }
    Ok(())
}
