//! Structure-preserving time stepping for the Allen-Cahn equation with a
//! general mobility on a square domain with homogeneous Neumann boundaries.
//!
//! The solver couples a cell-centered finite-difference discretization with a
//! linear doubly stabilized Crank-Nicolson step: a stabilized backward-Euler
//! predictor over half the step followed by a trapezoidal corrector with two
//! stabilizing terms. With the stabilizers chosen from [`mobility::s1_lower_bound`]
//! and [`mobility::s2_lower_bound`], every iterate stays inside `[-1, 1]`
//! regardless of the step size.
//!
//! Module map:
//!
//! - [`grid`]: cell fields, edge fields, discrete gradient/divergence/Laplacian, norms
//! - [`mobility`]: mobility models, the double-well potential, stabilizer bounds
//! - [`linsolve`]: matrix-free Helmholtz-type operators and Krylov solvers
//! - [`scheme`]: the stabilized BDF1 and Crank-Nicolson steps
//! - [`stepping`]: trajectory drivers, time grids, energy monitoring
//! - [`experiments`]: initial conditions and the benchmark problems
//! - [`oracle`]: dense Kronecker assembly used as ground truth on small grids
//! - [`config`], [`io`]: run configuration files and CSV/binary outputs

// `!(a < b)` is used on purpose so that NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod linsolve;
pub mod mobility;
pub mod oracle;
pub mod rng;
pub mod scheme;
pub mod stepping;

mod stencil;

pub use error::{Error, Result};
pub use grid::{CellField, Domain2D, EdgeFieldX, EdgeFieldY};
pub use linsolve::{HelmholtzOperator, SolveMethod, SolveReport, SolverConfig};
pub use mobility::{DoubleWell, Mobility, MobilityModel};
pub use scheme::{SchemeParams, Stage, StepOutput};
pub use stepping::{AdaptiveParams, RunOptions, RunOutcome, RunRecord, StepRow, TimeGrid};
