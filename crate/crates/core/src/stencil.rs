//! Slice-level kernels shared by the grid operators and the linear solvers.
//!
//! All fields are row-major `m x m` slices; `(i, j)` lives at `i * m + j`.

use rayon::prelude::*;

/// Grids at least this wide are processed row-parallel.
const PAR_MIN_CELLS_PER_SIDE: usize = 128;

/// Number of grid neighbours of cell `(i, j)` under the zero-flux closure.
#[inline]
pub(crate) fn neighbour_count(m: usize, i: usize, j: usize) -> f64 {
    let mut n = 4.0;
    if i == 0 {
        n -= 1.0;
    }
    if i == m - 1 {
        n -= 1.0;
    }
    if j == 0 {
        n -= 1.0;
    }
    if j == m - 1 {
        n -= 1.0;
    }
    n
}

/// Five-point Neumann Laplacian of row `i`, unscaled (multiply by `1/h^2`).
#[inline]
fn laplacian_row(m: usize, x: &[f64], i: usize, mut emit: impl FnMut(usize, f64)) {
    let row = &x[i * m..(i + 1) * m];
    let up = (i > 0).then(|| &x[(i - 1) * m..i * m]);
    let down = (i + 1 < m).then(|| &x[(i + 1) * m..(i + 2) * m]);
    for j in 0..m {
        let c = row[j];
        let mut s = 0.0;
        if let Some(up) = up {
            s += up[j] - c;
        }
        if let Some(down) = down {
            s += down[j] - c;
        }
        if j > 0 {
            s += row[j - 1] - c;
        }
        if j + 1 < m {
            s += row[j + 1] - c;
        }
        emit(j, s);
    }
}

/// Runs `kernel(i, out_row)` over every row of `out`.
fn for_each_row<F>(m: usize, out: &mut [f64], kernel: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if m >= PAR_MIN_CELLS_PER_SIDE {
        out.par_chunks_mut(m)
            .enumerate()
            .for_each(|(i, row)| kernel(i, row));
    } else {
        out.chunks_mut(m)
            .enumerate()
            .for_each(|(i, row)| kernel(i, row));
    }
}

/// `out = Δ_h x`.
pub(crate) fn laplacian(m: usize, inv_h2: f64, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), m * m);
    debug_assert_eq!(out.len(), m * m);
    for_each_row(m, out, |i, row| {
        laplacian_row(m, x, i, |j, s| row[j] = s * inv_h2);
    });
}

/// `out = shift * x - kappa * lambda ⊙ Δ_h x`.
pub(crate) fn helmholtz(
    m: usize,
    inv_h2: f64,
    shift: f64,
    kappa: f64,
    lambda: &[f64],
    x: &[f64],
    out: &mut [f64],
) {
    let k = kappa * inv_h2;
    for_each_row(m, out, |i, row| {
        let base = i * m;
        laplacian_row(m, x, i, |j, s| {
            let idx = base + j;
            row[j] = shift * x[idx] - k * lambda[idx] * s;
        });
    });
}

/// `out = shift * x / lambda - kappa * Δ_h x`, the symmetrized form of [`helmholtz`].
pub(crate) fn helmholtz_symmetrized(
    m: usize,
    inv_h2: f64,
    shift: f64,
    kappa: f64,
    inv_lambda: &[f64],
    x: &[f64],
    out: &mut [f64],
) {
    let k = kappa * inv_h2;
    for_each_row(m, out, |i, row| {
        let base = i * m;
        laplacian_row(m, x, i, |j, s| {
            let idx = base + j;
            row[j] = shift * inv_lambda[idx] * x[idx] - k * s;
        });
    });
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
