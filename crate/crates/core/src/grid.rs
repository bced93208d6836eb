//! Periodic unit-cell grid, scalar fields and the finite-difference stencils
//! shared by every other module.
//!
//! Cells are sampled at their centers, `x_i = (i + 1/2) * h`, on the unit cube
//! `[0, 1)^3`. Storage is x-fastest: `index = i + nx * (j + ny * k)`.
//!
//! All stencil passes are pure. They read an immutable input field and fill a
//! fresh output, split into z-slabs that are processed by the rayon pool.
//! Reductions are summed per slab and then combined in slab order, so results
//! do not depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Smallest extent accepted on any axis.
pub const MIN_EXTENT: usize = 8;

/// Uniform Cartesian discretization of the unit cell with wrap-around indexing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicGrid {
    n: [usize; 3],
}

impl PeriodicGrid {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        let n = [nx, ny, nz];
        if let Some(axis) = n.iter().position(|&e| e < MIN_EXTENT) {
            return Err(Error::InvalidGrid(format!(
                "extent {} on axis {} is below the minimum of {}",
                n[axis], axis, MIN_EXTENT
            )));
        }
        Ok(Self { n })
    }

    pub fn cubic(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    #[inline]
    pub fn extents(&self) -> [usize; 3] {
        self.n
    }

    /// Grid spacing per axis, `1 / n_i`.
    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        [1.0 / self.n[0] as f64, 1.0 / self.n[1] as f64, 1.0 / self.n[2] as f64]
    }

    pub fn min_spacing(&self) -> f64 {
        let h = self.spacing();
        h[0].min(h[1]).min(h[2])
    }

    pub fn max_spacing(&self) -> f64 {
        let h = self.spacing();
        h[0].max(h[1]).max(h[2])
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        let h = self.spacing();
        h[0] * h[1] * h[2]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    /// Flat index of a possibly out-of-range cell, wrapped periodically.
    #[inline]
    pub fn wrapped_index(&self, i: isize, j: isize, k: isize) -> usize {
        self.index(
            i.rem_euclid(self.n[0] as isize) as usize,
            j.rem_euclid(self.n[1] as isize) as usize,
            k.rem_euclid(self.n[2] as isize) as usize,
        )
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.n[0];
        let rest = idx / self.n[0];
        (i, rest % self.n[1], rest / self.n[1])
    }

    /// Cell-center coordinates.
    #[inline]
    pub fn coord(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.spacing();
        [
            (i as f64 + 0.5) * h[0],
            (j as f64 + 0.5) * h[1],
            (k as f64 + 0.5) * h[2],
        ]
    }

    #[inline]
    fn slab_len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    /// Fill a fresh array by evaluating `f` on the stencil around every cell.
    pub fn map_cells<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&Stencil) -> f64 + Sync,
    {
        let mut out = vec![0.0; self.len()];
        self.fill_cells(&mut out, f);
        out
    }

    /// The `Some` results of `f` over all cells, in flat index order.
    pub fn filter_cells<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&Stencil) -> Option<T> + Sync,
    {
        let grid = *self;
        let slabs: Vec<Vec<T>> = (0..self.n[2])
            .into_par_iter()
            .map(|k| {
                let mut out = Vec::new();
                grid.for_each_in_slab(k, |s| out.extend(f(s)));
                out
            })
            .collect();
        slabs.into_iter().flatten().collect()
    }

    /// Overwrite `out` with `f` evaluated on the stencil around every cell.
    pub fn fill_cells<F>(&self, out: &mut [f64], f: F)
    where
        F: Fn(&Stencil) -> f64 + Sync,
    {
        assert_eq!(out.len(), self.len());
        let grid = *self;
        out.par_chunks_mut(self.slab_len()).enumerate().for_each(|(k, slab)| {
            grid.for_each_in_slab(k, |s| slab[s.local] = f(s));
        });
    }

    /// Fill `out` and reduce side values in one pass; the reduction follows the
    /// same slab ordering as [`PeriodicGrid::sum_cells`].
    pub fn fill_and_sum<F, const M: usize>(&self, out: &mut [f64], f: F) -> [f64; M]
    where
        F: Fn(&Stencil) -> (f64, [f64; M]) + Sync,
    {
        assert_eq!(out.len(), self.len());
        let grid = *self;
        let partial: Vec<[f64; M]> = out
            .par_chunks_mut(self.slab_len())
            .enumerate()
            .map(|(k, slab)| {
                let mut acc = [0.0; M];
                grid.for_each_in_slab(k, |s| {
                    let (v, r) = f(s);
                    slab[s.local] = v;
                    for m in 0..M {
                        acc[m] += r[m];
                    }
                });
                acc
            })
            .collect();
        let mut total = [0.0; M];
        for p in partial {
            for m in 0..M {
                total[m] += p[m];
            }
        }
        total
    }

    /// Deterministic reduction: `f` is summed over each z-slab, and slab sums
    /// are combined sequentially in slab order.
    pub fn sum_cells<F, const M: usize>(&self, f: F) -> [f64; M]
    where
        F: Fn(&Stencil) -> [f64; M] + Sync,
    {
        let grid = *self;
        let partial: Vec<[f64; M]> = (0..self.n[2])
            .into_par_iter()
            .map(|k| {
                let mut acc = [0.0; M];
                grid.for_each_in_slab(k, |s| {
                    let v = f(s);
                    for m in 0..M {
                        acc[m] += v[m];
                    }
                });
                acc
            })
            .collect();
        let mut total = [0.0; M];
        for p in partial {
            for m in 0..M {
                total[m] += p[m];
            }
        }
        total
    }

    #[inline]
    fn for_each_in_slab<F: FnMut(&Stencil)>(&self, k: usize, mut f: F) {
        let [nx, ny, nz] = self.n;
        let plane = nx * ny;
        let kk = [((k + nz - 1) % nz) * plane, k * plane, ((k + 1) % nz) * plane];
        let kk2 = [((k + 2 * nz - 2) % nz) * plane, ((k + 2) % nz) * plane];
        for j in 0..ny {
            let jj = [((j + ny - 1) % ny) * nx, j * nx, ((j + 1) % ny) * nx];
            let jj2 = [((j + 2 * ny - 2) % ny) * nx, ((j + 2) % ny) * nx];
            for i in 0..nx {
                let ii = [
                    if i == 0 { nx - 1 } else { i - 1 },
                    i,
                    if i + 1 == nx { 0 } else { i + 1 },
                ];
                let ii2 = [(i + 2 * nx - 2) % nx, (i + 2) % nx];
                let s = Stencil {
                    ii,
                    jj,
                    kk,
                    far: [
                        [ii2[0] + jj[1] + kk[1], ii2[1] + jj[1] + kk[1]],
                        [ii[1] + jj2[0] + kk[1], ii[1] + jj2[1] + kk[1]],
                        [ii[1] + jj[1] + kk2[0], ii[1] + jj[1] + kk2[1]],
                    ],
                    local: i + j * nx,
                    ijk: [i, j, k],
                };
                f(&s);
            }
        }
    }
}

/// 3x3x3 neighborhood of one cell with periodic wrap already applied.
///
/// `at(a, b, c)` addresses offsets `(a-1, b-1, c-1)`, so `at(1, 1, 1)` is the
/// center and `at(2, 1, 1)` the `+x` neighbor.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    ii: [usize; 3],
    jj: [usize; 3],
    kk: [usize; 3],
    far: [[usize; 2]; 3],
    local: usize,
    ijk: [usize; 3],
}

impl Stencil {
    #[inline(always)]
    pub fn at(&self, a: usize, b: usize, c: usize) -> usize {
        self.ii[a] + self.jj[b] + self.kk[c]
    }

    #[inline(always)]
    pub fn center(&self) -> usize {
        self.at(1, 1, 1)
    }

    /// Flat index of the neighbor one step along `axis`, forward or backward.
    #[inline(always)]
    pub fn neighbor(&self, axis: usize, forward: bool) -> usize {
        let o = if forward { 2 } else { 0 };
        match axis {
            0 => self.at(o, 1, 1),
            1 => self.at(1, o, 1),
            _ => self.at(1, 1, o),
        }
    }

    /// Flat index two steps along `axis`.
    #[inline(always)]
    pub fn far_neighbor(&self, axis: usize, forward: bool) -> usize {
        self.far[axis][forward as usize]
    }

    #[inline(always)]
    pub fn ijk(&self) -> [usize; 3] {
        self.ijk
    }
}

/// Grid-attached scalar values, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_values(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("value at index {p} is {}", values[p])));
        }
        Ok(Self { grid, values })
    }

    /// Wrap an array produced by a stencil pass. Callers guarantee the length.
    pub(crate) fn from_raw(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: PeriodicGrid, value: f64) -> Self {
        Self::from_raw(grid, vec![value; grid.len()])
    }

    /// Sample `f(x, y, z)` at every cell center.
    pub fn from_fn<F>(grid: PeriodicGrid, f: F) -> Self
    where
        F: Fn([f64; 3]) -> f64 + Sync,
    {
        let values = grid.map_cells(|s| {
            let [i, j, k] = s.ijk();
            f(grid.coord(i, j, k))
        });
        Self::from_raw(grid, values)
    }

    #[inline]
    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: isize, j: isize, k: isize) -> f64 {
        self.values[self.grid.wrapped_index(i, j, k)]
    }

    pub fn map<F: Fn(f64) -> f64 + Sync + Send>(&self, f: F) -> Self {
        let values = self.values.par_iter().map(|&v| f(v)).collect();
        Self::from_raw(self.grid, values)
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Cyclic shift by whole cells: output cell `(i, j, k)` holds input cell
    /// `(i - di, j - dj, k - dk)`.
    pub fn shifted(&self, di: isize, dj: isize, dk: isize) -> Self {
        let g = self.grid;
        let values = g.map_cells(|s| {
            let [i, j, k] = s.ijk();
            self.values[g.wrapped_index(i as isize - di, j as isize - dj, k as isize - dk)]
        });
        Self::from_raw(g, values)
    }

    /// Mirror along `axis` about the cell-centered origin: `x -> 1 - x`.
    pub fn reflected(&self, axis: usize) -> Self {
        let g = self.grid;
        let n = g.extents();
        let values = g.map_cells(|s| {
            let mut c = s.ijk();
            c[axis] = n[axis] - 1 - c[axis];
            self.values[g.index(c[0], c[1], c[2])]
        });
        Self::from_raw(g, values)
    }

    /// Periodic trilinear interpolation at an arbitrary point of the unit cell.
    pub fn interpolate(&self, p: [f64; 3]) -> f64 {
        let n = self.grid.extents();
        let mut base = [0isize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let u = p[a] * n[a] as f64 - 0.5;
            let f = u.floor();
            base[a] = f as isize;
            t[a] = u - f;
        }
        let mut acc = 0.0;
        for c in 0..8 {
            let o = [(c & 1) as isize, ((c >> 1) & 1) as isize, ((c >> 2) & 1) as isize];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if o[a] == 1 { t[a] } else { 1.0 - t[a] };
            }
            if w != 0.0 {
                acc += w * self.get(base[0] + o[0], base[1] + o[1], base[2] + o[2]);
            }
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn has_sign_change(&self) -> bool {
        let has_neg = self.values.iter().any(|&v| v < 0.0);
        let has_pos = self.values.iter().any(|&v| v >= 0.0);
        has_neg && has_pos
    }
}

/// Per-axis partial derivatives.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
    pub z: ScalarField,
}

impl VectorField {
    pub fn component(&self, axis: usize) -> &ScalarField {
        match axis {
            0 => &self.x,
            1 => &self.y,
            _ => &self.z,
        }
    }
}

/// Second derivatives in the order `xx, yy, zz, xy, xz, yz`.
#[derive(Debug, Clone)]
pub struct Hessian {
    pub xx: ScalarField,
    pub yy: ScalarField,
    pub zz: ScalarField,
    pub xy: ScalarField,
    pub xz: ScalarField,
    pub yz: ScalarField,
}

/// Second-order central gradient at one cell.
#[inline(always)]
pub(crate) fn central_gradient_at(v: &[f64], s: &Stencil, inv2h: [f64; 3]) -> [f64; 3] {
    [
        (v[s.at(2, 1, 1)] - v[s.at(0, 1, 1)]) * inv2h[0],
        (v[s.at(1, 2, 1)] - v[s.at(1, 0, 1)]) * inv2h[1],
        (v[s.at(1, 1, 2)] - v[s.at(1, 1, 0)]) * inv2h[2],
    ]
}

/// Second-order central second derivatives at one cell, `[xx, yy, zz, xy, xz, yz]`.
#[inline(always)]
pub(crate) fn central_hessian_at(v: &[f64], s: &Stencil, h: [f64; 3]) -> [f64; 6] {
    let c = v[s.center()];
    let xx = (v[s.at(2, 1, 1)] - 2.0 * c + v[s.at(0, 1, 1)]) / (h[0] * h[0]);
    let yy = (v[s.at(1, 2, 1)] - 2.0 * c + v[s.at(1, 0, 1)]) / (h[1] * h[1]);
    let zz = (v[s.at(1, 1, 2)] - 2.0 * c + v[s.at(1, 1, 0)]) / (h[2] * h[2]);
    let xy = (v[s.at(2, 2, 1)] - v[s.at(2, 0, 1)] - v[s.at(0, 2, 1)] + v[s.at(0, 0, 1)]) / (4.0 * h[0] * h[1]);
    let xz = (v[s.at(2, 1, 2)] - v[s.at(2, 1, 0)] - v[s.at(0, 1, 2)] + v[s.at(0, 1, 0)]) / (4.0 * h[0] * h[2]);
    let yz = (v[s.at(1, 2, 2)] - v[s.at(1, 2, 0)] - v[s.at(1, 0, 2)] + v[s.at(1, 0, 0)]) / (4.0 * h[1] * h[2]);
    [xx, yy, zz, xy, xz, yz]
}

/// Godunov-upwinded gradient magnitude for `phi_t + a |grad phi| = 0`, with
/// `speed_sign = sign(a)`. A zero sign falls back to the central norm.
#[inline(always)]
pub(crate) fn godunov_norm_at(v: &[f64], s: &Stencil, h: [f64; 3], speed_sign: f64) -> f64 {
    let c = v[s.center()];
    if speed_sign == 0.0 {
        let g = central_gradient_at(v, s, [0.5 / h[0], 0.5 / h[1], 0.5 / h[2]]);
        return (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    }
    let mut sum = 0.0;
    for axis in 0..3 {
        let dm = (c - v[s.neighbor(axis, false)]) / h[axis];
        let dp = (v[s.neighbor(axis, true)] - c) / h[axis];
        let term = if speed_sign > 0.0 {
            let a = dm.max(0.0);
            let b = dp.min(0.0);
            (a * a).max(b * b)
        } else {
            let a = dm.min(0.0);
            let b = dp.max(0.0);
            (a * a).max(b * b)
        };
        sum += term;
    }
    sum.sqrt()
}

#[inline(always)]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Second-order ENO one-sided differences `(D⁻, D⁺)` along `axis`.
#[inline(always)]
pub(crate) fn eno2_differences(v: &[f64], s: &Stencil, axis: usize, h: f64) -> (f64, f64) {
    let c = v[s.center()];
    let m1 = v[s.neighbor(axis, false)];
    let p1 = v[s.neighbor(axis, true)];
    let m2 = v[s.far_neighbor(axis, false)];
    let p2 = v[s.far_neighbor(axis, true)];
    let dd_m = m2 - 2.0 * m1 + c;
    let dd_c = m1 - 2.0 * c + p1;
    let dd_p = c - 2.0 * p1 + p2;
    let dm = (c - m1) / h + 0.5 * minmod(dd_m, dd_c) / h;
    let dp = (p1 - c) / h - 0.5 * minmod(dd_c, dd_p) / h;
    (dm, dp)
}

/// Godunov Hamiltonian with second-order ENO differences; same sign
/// convention as [`godunov_norm_at`].
#[inline(always)]
pub(crate) fn godunov_norm_eno2_at(v: &[f64], s: &Stencil, h: [f64; 3], speed_sign: f64) -> f64 {
    let mut sum = 0.0;
    for (axis, &ha) in h.iter().enumerate() {
        let (dm, dp) = eno2_differences(v, s, axis, ha);
        sum += if speed_sign >= 0.0 {
            dm.max(0.0).powi(2).max(dp.min(0.0).powi(2))
        } else {
            dm.min(0.0).powi(2).max(dp.max(0.0).powi(2))
        };
    }
    sum.sqrt()
}

pub fn gradient_central(field: &ScalarField) -> VectorField {
    let g = *field.grid();
    let h = g.spacing();
    let inv2h = [0.5 / h[0], 0.5 / h[1], 0.5 / h[2]];
    let v = field.values();
    let comp = |axis: usize| ScalarField::from_raw(g, g.map_cells(|s| central_gradient_at(v, s, inv2h)[axis]));
    VectorField {
        x: comp(0),
        y: comp(1),
        z: comp(2),
    }
}

/// Central-difference `|grad phi|`.
pub fn gradient_norm_central(field: &ScalarField) -> ScalarField {
    gradient_norm_godunov(field, 0.0)
}

/// Godunov-upwinded `|grad phi|` using first-order one-sided differences chosen
/// by the sign of the normal speed `a` in `phi_t + a |grad phi| = 0`.
pub fn gradient_norm_godunov(field: &ScalarField, speed_sign: f64) -> ScalarField {
    let g = *field.grid();
    let h = g.spacing();
    let sign = if speed_sign > 0.0 {
        1.0
    } else if speed_sign < 0.0 {
        -1.0
    } else {
        0.0
    };
    let v = field.values();
    ScalarField::from_raw(g, g.map_cells(|s| godunov_norm_at(v, s, h, sign)))
}

pub fn hessian_central(field: &ScalarField) -> Hessian {
    let g = *field.grid();
    let h = g.spacing();
    let v = field.values();
    let comp = |m: usize| ScalarField::from_raw(g, g.map_cells(|s| central_hessian_at(v, s, h)[m]));
    Hessian {
        xx: comp(0),
        yy: comp(1),
        zz: comp(2),
        xy: comp(3),
        xz: comp(4),
        yz: comp(5),
    }
}
