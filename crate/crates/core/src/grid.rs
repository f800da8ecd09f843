//! Cell-centered finite differences on a uniform square grid.
//!
//! Cell values live at `x_i = origin + (i + 1/2) h`, `i = 0..m`. Edge values
//! live on the `m + 1` faces between (and around) cells; the gradient maps
//! into the zero-flux edge spaces, so the homogeneous Neumann condition is
//! built into the operators and no ghost cells are needed.
//!
//! Storage is row-major: cell `(i, j)` is at `i * m + j`, which is the
//! lexicographic ordering used by the Kronecker-form matrices in [`crate::oracle`].

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::stencil;

/// Uniform grid on the square `[origin, origin + side_length]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain2D {
    side_length: f64,
    cells: usize,
    spacing: f64,
    origin: f64,
}

impl Domain2D {
    /// Domain `(0, side_length)^2` split into `cells` cells per side.
    pub fn new(side_length: f64, cells: usize) -> Result<Self> {
        Self::with_origin(side_length, cells, 0.0)
    }

    /// Domain `(-side_length/2, side_length/2)^2`.
    pub fn centered(side_length: f64, cells: usize) -> Result<Self> {
        Self::with_origin(side_length, cells, -0.5 * side_length)
    }

    pub fn with_origin(side_length: f64, cells: usize, origin: f64) -> Result<Self> {
        if !(side_length.is_finite() && side_length > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "side length must be positive and finite, got {side_length}"
            )));
        }
        if cells < 2 {
            return Err(Error::InvalidDomain(format!(
                "need at least 2 cells per side, got {cells}"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidDomain("origin must be finite".into()));
        }
        Ok(Self {
            side_length,
            cells,
            spacing: side_length / cells as f64,
            origin,
        })
    }

    /// Rebuilds a domain from its spacing, keeping `h` bit-exact.
    pub fn from_spacing(cells: usize, spacing: f64) -> Result<Self> {
        let mut d = Self::new(spacing * cells as f64, cells)?;
        d.spacing = spacing;
        Ok(d)
    }

    /// Unit square `(0, 1)^2`.
    pub fn unit(cells: usize) -> Result<Self> {
        Self::new(1.0, cells)
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.cells * self.cells
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn area(&self) -> f64 {
        self.side_length * self.side_length
    }

    /// Coordinate of the center of cell index `i` (0-based) along either axis.
    pub fn cell_center(&self, i: usize) -> f64 {
        self.origin + (i as f64 + 0.5) * self.spacing
    }

    /// Coordinate of edge `k` (0..=cells) along either axis.
    pub fn edge(&self, k: usize) -> f64 {
        self.origin + k as f64 * self.spacing
    }

    pub(crate) fn inv_h2(&self) -> f64 {
        1.0 / (self.spacing * self.spacing)
    }
}

/// Scalar field at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    domain: Domain2D,
    values: Vec<f64>,
}

impl CellField {
    pub fn zeros(domain: Domain2D) -> Self {
        Self::constant(domain, 0.0)
    }

    pub fn constant(domain: Domain2D, value: f64) -> Self {
        Self {
            domain,
            values: vec![value; domain.len()],
        }
    }

    pub fn from_vec(domain: Domain2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::ShapeMismatch {
                expected: domain.len(),
                found: values.len(),
            });
        }
        Ok(Self { domain, values })
    }

    /// Samples `f(x, y)` at every cell center.
    pub fn from_fn(domain: Domain2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let m = domain.cells();
        let mut values = Vec::with_capacity(m * m);
        for i in 0..m {
            let x = domain.cell_center(i);
            for j in 0..m {
                values.push(f(x, domain.cell_center(j)));
            }
        }
        Self { domain, values }
    }

    pub fn domain(&self) -> &Domain2D {
        &self.domain
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            domain: self.domain,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self - other`, entrywise.
    pub fn difference(&self, other: &CellField) -> Self {
        assert_same_domain(&self.domain, &other.domain);
        Self {
            domain: self.domain,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.domain.cells())
    }
}

impl Index<(usize, usize)> for CellField {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.values[i * self.domain.cells() + j]
    }
}

impl IndexMut<(usize, usize)> for CellField {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        let m = self.domain.cells();
        &mut self.values[i * m + j]
    }
}

/// Values on x-faces: `(m + 1) x m`, face `k` sits at `x = edge(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFieldX {
    domain: Domain2D,
    values: Vec<f64>,
}

/// Values on y-faces: `m x (m + 1)`, face `k` sits at `y = edge(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFieldY {
    domain: Domain2D,
    values: Vec<f64>,
}

impl EdgeFieldX {
    pub fn zeros(domain: Domain2D) -> Self {
        let m = domain.cells();
        Self {
            domain,
            values: vec![0.0; (m + 1) * m],
        }
    }

    pub fn from_vec(domain: Domain2D, values: Vec<f64>) -> Result<Self> {
        let m = domain.cells();
        if values.len() != (m + 1) * m {
            return Err(Error::ShapeMismatch {
                expected: (m + 1) * m,
                found: values.len(),
            });
        }
        Ok(Self { domain, values })
    }

    pub fn domain(&self) -> &Domain2D {
        &self.domain
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// True when the first and last face rows vanish.
    pub fn is_zero_flux(&self) -> bool {
        let m = self.domain.cells();
        (0..m).all(|j| self[(0, j)] == 0.0 && self[(m, j)] == 0.0)
    }
}

impl Index<(usize, usize)> for EdgeFieldX {
    type Output = f64;

    fn index(&self, (k, j): (usize, usize)) -> &f64 {
        &self.values[k * self.domain.cells() + j]
    }
}

impl IndexMut<(usize, usize)> for EdgeFieldX {
    fn index_mut(&mut self, (k, j): (usize, usize)) -> &mut f64 {
        let m = self.domain.cells();
        &mut self.values[k * m + j]
    }
}

impl EdgeFieldY {
    pub fn zeros(domain: Domain2D) -> Self {
        let m = domain.cells();
        Self {
            domain,
            values: vec![0.0; m * (m + 1)],
        }
    }

    pub fn from_vec(domain: Domain2D, values: Vec<f64>) -> Result<Self> {
        let m = domain.cells();
        if values.len() != m * (m + 1) {
            return Err(Error::ShapeMismatch {
                expected: m * (m + 1),
                found: values.len(),
            });
        }
        Ok(Self { domain, values })
    }

    pub fn domain(&self) -> &Domain2D {
        &self.domain
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// True when the first and last face columns vanish.
    pub fn is_zero_flux(&self) -> bool {
        let m = self.domain.cells();
        (0..m).all(|i| self[(i, 0)] == 0.0 && self[(i, m)] == 0.0)
    }
}

impl Index<(usize, usize)> for EdgeFieldY {
    type Output = f64;

    fn index(&self, (i, k): (usize, usize)) -> &f64 {
        &self.values[i * (self.domain.cells() + 1) + k]
    }
}

impl IndexMut<(usize, usize)> for EdgeFieldY {
    fn index_mut(&mut self, (i, k): (usize, usize)) -> &mut f64 {
        let m = self.domain.cells();
        &mut self.values[i * (m + 1) + k]
    }
}

#[track_caller]
fn assert_same_domain(a: &Domain2D, b: &Domain2D) {
    assert_eq!(a, b, "fields live on different domains");
}

/// Forward-difference gradient into the zero-flux edge spaces.
pub fn grad(u: &CellField) -> (EdgeFieldX, EdgeFieldY) {
    let d = *u.domain();
    let m = d.cells();
    let inv_h = 1.0 / d.spacing();
    let mut gx = EdgeFieldX::zeros(d);
    let mut gy = EdgeFieldY::zeros(d);
    for k in 1..m {
        for j in 0..m {
            gx[(k, j)] = (u[(k, j)] - u[(k - 1, j)]) * inv_h;
        }
    }
    for i in 0..m {
        for k in 1..m {
            gy[(i, k)] = (u[(i, k)] - u[(i, k - 1)]) * inv_h;
        }
    }
    (gx, gy)
}

/// Discrete divergence of an edge vector field.
pub fn div(ux: &EdgeFieldX, uy: &EdgeFieldY) -> CellField {
    let d = *ux.domain();
    assert_same_domain(&d, uy.domain());
    let m = d.cells();
    let inv_h = 1.0 / d.spacing();
    let mut out = CellField::zeros(d);
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] =
                (ux[(i + 1, j)] - ux[(i, j)]) * inv_h + (uy[(i, j + 1)] - uy[(i, j)]) * inv_h;
        }
    }
    out
}

/// Matrix-free five-point Neumann Laplacian, equal to `div(grad(u))`.
pub fn laplacian(u: &CellField) -> CellField {
    let d = *u.domain();
    let mut out = CellField::zeros(d);
    stencil::laplacian(d.cells(), d.inv_h2(), u.as_slice(), out.as_mut_slice());
    out
}

/// `<u, v> = h^2 Σ u_ij v_ij`.
pub fn inner_l2(u: &CellField, v: &CellField) -> f64 {
    assert_same_domain(u.domain(), v.domain());
    let h = u.domain().spacing();
    h * h * stencil::dot(u.as_slice(), v.as_slice())
}

/// Edge inner product `[v, w]` built from the midpoint averages onto cells.
pub fn inner_edge(vx: &EdgeFieldX, wx: &EdgeFieldX, vy: &EdgeFieldY, wy: &EdgeFieldY) -> f64 {
    let d = *vx.domain();
    assert_same_domain(&d, wx.domain());
    assert_same_domain(&d, vy.domain());
    assert_same_domain(&d, wy.domain());
    let m = d.cells();
    let h = d.spacing();
    let mut sx = 0.0;
    let mut sy = 0.0;
    for i in 0..m {
        for j in 0..m {
            sx += 0.5 * (vx[(i + 1, j)] * wx[(i + 1, j)] + vx[(i, j)] * wx[(i, j)]);
            sy += 0.5 * (vy[(i, j + 1)] * wy[(i, j + 1)] + vy[(i, j)] * wy[(i, j)]);
        }
    }
    h * h * (sx + sy)
}

pub fn norm_l2(u: &CellField) -> f64 {
    inner_l2(u, u).sqrt()
}

/// `sqrt([∇u, ∇u])`.
pub fn seminorm_h1(u: &CellField) -> f64 {
    gradient_energy(u).sqrt()
}

pub fn norm_h1(u: &CellField) -> f64 {
    let l2 = norm_l2(u);
    (l2 * l2 + gradient_energy(u)).sqrt()
}

/// Entrywise maximum absolute value.
pub fn norm_sup(u: &CellField) -> f64 {
    u.as_slice().iter().fold(0.0_f64, |acc, v| {
        if v.is_nan() || acc.is_nan() {
            f64::NAN
        } else {
            acc.max(v.abs())
        }
    })
}

/// `[∇u, ∇u]` computed face by face without materializing edge fields.
pub(crate) fn gradient_energy(u: &CellField) -> f64 {
    let d = u.domain();
    let m = d.cells();
    let x = u.as_slice();
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            let c = x[i * m + j];
            if i + 1 < m {
                let g = x[(i + 1) * m + j] - c;
                s += g * g;
            }
            if j + 1 < m {
                let g = x[i * m + j + 1] - c;
                s += g * g;
            }
        }
    }
    // h^2 * Σ (Δu / h)^2 over interior faces
    s
}
