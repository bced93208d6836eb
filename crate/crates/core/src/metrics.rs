//! Level-set functionals: smoothed delta and Heaviside, surface area, volume
//! fraction, the mean-curvature field and the Lagrange multiplier.
//!
//! Surface integrals are converted to volume quadrature,
//! `∫_Γ p dS ≈ Σ p δ_ε(φ) |∇φ| ΔV`, with a central-difference `|∇φ|`.
//! Phase 1 is the region `φ < 0`, and `n = ∇φ / |∇φ|` points out of it.
//!
//! Sign conventions: `∇·n` is positive on a sphere that encloses phase 1,
//! `λ = -⟨∇·n⟩_Γ` and `H = λ / 2`, so a sphere of radius `r` around phase 1
//! has `λ = -2/r` and `H = -1/r`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{central_gradient_at, central_hessian_at, PeriodicGrid, ScalarField};

/// Default half-width of the smoothed delta in units of the coarsest spacing.
pub const DEFAULT_EPSILON_MULT: f64 = 3.0;

/// Floor on `|∇φ|` in the curvature denominator.
pub const GRADIENT_FLOOR: f64 = 1e-8;

/// Accepted range of `|∇φ|` inside the interface band for surface quadrature.
pub const GRADIENT_RANGE: (f64, f64) = (0.1, 10.0);

/// Below this area the zero level set is treated as gone.
pub const MIN_AREA: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub epsilon: f64,
}

impl SmoothingParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    /// `ε = mult · max(Δx₁, Δx₂, Δx₃)`.
    pub fn for_grid(grid: &PeriodicGrid, mult: f64) -> Result<Self> {
        Self::new(mult * grid.max_spacing())
    }

    pub fn default_for(grid: &PeriodicGrid) -> Self {
        Self {
            epsilon: DEFAULT_EPSILON_MULT * grid.max_spacing(),
        }
    }
}

/// Cosine-smoothed delta with support `[-ε, ε]`.
#[inline]
pub fn smoothed_delta(phi: f64, params: SmoothingParams) -> f64 {
    let eps = params.epsilon;
    if phi.abs() > eps {
        0.0
    } else {
        (1.0 + (PI * phi / eps).cos()) / (2.0 * eps)
    }
}

/// Antiderivative of [`smoothed_delta`], rising from 0 at `-ε` to 1 at `ε`.
#[inline]
pub fn smoothed_heaviside(phi: f64, params: SmoothingParams) -> f64 {
    let eps = params.epsilon;
    if phi < -eps {
        0.0
    } else if phi > eps {
        1.0
    } else {
        0.5 * (1.0 + phi / eps + (PI * phi / eps).sin() / PI)
    }
}

/// Central `|∇φ|` and `∇·n` on every cell, computed in one pass.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub grad_norm: ScalarField,
    pub curvature: ScalarField,
    /// Cells within one band-width of the zero set whose raw `|∇φ|` fell
    /// below the floor.
    pub degenerate_cells: usize,
}

impl Geometry {
    pub fn of(phi: &ScalarField) -> Self {
        Self::with_floor(phi, GRADIENT_FLOOR)
    }

    pub fn with_floor(phi: &ScalarField, eta: f64) -> Self {
        let g = *phi.grid();
        let h = g.spacing();
        let inv2h = [0.5 / h[0], 0.5 / h[1], 0.5 / h[2]];
        let v = phi.values();
        let mut grad_norm = vec![0.0; g.len()];
        g.fill_cells(&mut grad_norm, |s| {
            let d = central_gradient_at(v, s, inv2h);
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        });
        let curvature = g.map_cells(|s| {
            let d = central_gradient_at(v, s, inv2h);
            let hs = central_hessian_at(v, s, h);
            curvature_from_derivatives(d, hs, eta)
        });
        // Clamped plateaus far from the interface have zero gradient by
        // construction and are not counted.
        let reach = 3.0 * DEFAULT_EPSILON_MULT * g.max_spacing();
        let degenerate_cells = grad_norm
            .iter()
            .zip(v)
            .filter(|(&n, &p)| n < eta && p.abs() < reach)
            .count();
        Self {
            grad_norm: ScalarField::from_raw(g, grad_norm),
            curvature: ScalarField::from_raw(g, curvature),
            degenerate_cells,
        }
    }
}

#[inline(always)]
pub(crate) fn curvature_from_derivatives(d: [f64; 3], hs: [f64; 6], eta: f64) -> f64 {
    let [px, py, pz] = d;
    let [xx, yy, zz, xy, xz, yz] = hs;
    let (px2, py2, pz2) = (px * px, py * py, pz * pz);
    let num =
        xx * (py2 + pz2) + yy * (px2 + pz2) + zz * (px2 + py2) - 2.0 * (px * py * xy + px * pz * xz + py * pz * yz);
    let norm = (px2 + py2 + pz2).sqrt().max(eta);
    num / (norm * norm * norm)
}

/// `∇·(∇φ/|∇φ|)` per cell, central differences with the default gradient floor.
pub fn mean_curvature_divergence(phi: &ScalarField) -> ScalarField {
    Geometry::of(phi).curvature
}

pub(crate) fn check_band(phi: &ScalarField, grad_norm: &ScalarField, params: SmoothingParams) -> Result<()> {
    for (&p, &n) in phi.values().iter().zip(grad_norm.values()) {
        if p.abs() <= params.epsilon && !(GRADIENT_RANGE.0..=GRADIENT_RANGE.1).contains(&n) {
            return Err(Error::DistortedField { value: n });
        }
    }
    Ok(())
}

/// Surface-quadrature weights `δ_ε(φ)|∇φ|ΔV` summed against `integrand`.
fn weighted_sum(
    phi: &ScalarField,
    grad_norm: &ScalarField,
    integrand: Option<&[f64]>,
    params: SmoothingParams,
) -> [f64; 2] {
    let g = *phi.grid();
    let dv = g.cell_volume();
    let v = phi.values();
    let n = grad_norm.values();
    g.sum_cells(|s| {
        let c = s.center();
        let w = smoothed_delta(v[c], params) * n[c] * dv;
        if w == 0.0 {
            return [0.0, 0.0];
        }
        let p = integrand.map_or(1.0, |q| q[c]);
        [w, p * w]
    })
}

/// `∫_Γ p dS` via smoothed-delta quadrature.
pub fn surface_integral(phi: &ScalarField, integrand: &ScalarField, params: SmoothingParams) -> Result<f64> {
    let geo = Geometry::of(phi);
    check_band(phi, &geo.grad_norm, params)?;
    Ok(weighted_sum(phi, &geo.grad_norm, Some(integrand.values()), params)[1])
}

/// Total area of the zero level set.
pub fn surface_area(phi: &ScalarField, params: SmoothingParams) -> Result<f64> {
    surface_integral(phi, &ScalarField::constant(*phi.grid(), 1.0), params)
}

/// Volume fraction of phase 1, `Σ (1 - H_ε(φ)) ΔV`.
pub fn volume_fraction(phi: &ScalarField, params: SmoothingParams) -> f64 {
    let g = *phi.grid();
    let v = phi.values();
    let [s] = g.sum_cells(|st| [1.0 - smoothed_heaviside(v[st.center()], params)]);
    (s * g.cell_volume()).clamp(0.0, 1.0)
}

/// `λ = -∫_Γ ∇·n dS / A`.
pub fn lagrange_multiplier(phi: &ScalarField, params: SmoothingParams) -> Result<f64> {
    let geo = Geometry::of(phi);
    check_band(phi, &geo.grad_norm, params)?;
    lagrange_from_geometry(phi, &geo, params)
}

pub(crate) fn lagrange_from_geometry(phi: &ScalarField, geo: &Geometry, params: SmoothingParams) -> Result<f64> {
    let [area, kint] = weighted_sum(phi, &geo.grad_norm, Some(geo.curvature.values()), params);
    if area < MIN_AREA {
        return Err(Error::EmptySurface);
    }
    Ok(-kint / area)
}

/// Scalar summary of a level-set field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMetrics {
    pub area: f64,
    pub volume_fraction: f64,
    pub lagrange_multiplier: f64,
    /// `H = λ / 2`.
    pub mean_curvature_avg: f64,
    /// Area-weighted standard deviation of `∇·n` sampled on the interface.
    pub curvature_stddev: f64,
    /// Cells where `|∇φ|` hit the curvature floor.
    pub degenerate_cells: usize,
}

impl SurfaceMetrics {
    pub fn evaluate(phi: &ScalarField, params: SmoothingParams) -> Result<Self> {
        let geo = Geometry::of(phi);
        check_band(phi, &geo.grad_norm, params)?;
        Self::from_geometry(phi, &geo, params)
    }

    /// Same as [`SurfaceMetrics::evaluate`] without the `|∇φ|` band check.
    pub fn evaluate_unchecked(phi: &ScalarField, params: SmoothingParams) -> Result<Self> {
        Self::from_geometry(phi, &Geometry::of(phi), params)
    }

    pub(crate) fn from_geometry(phi: &ScalarField, geo: &Geometry, params: SmoothingParams) -> Result<Self> {
        let [area, _] = weighted_sum(phi, &geo.grad_norm, None, params);
        let lambda = lagrange_from_geometry(phi, geo, params)?;
        let (_, curvature_stddev) = interface_curvature_stats(phi, geo, params);
        Ok(Self {
            area,
            volume_fraction: volume_fraction(phi, params),
            lagrange_multiplier: lambda,
            mean_curvature_avg: 0.5 * lambda,
            curvature_stddev,
            degenerate_cells: geo.degenerate_cells,
        })
    }

    /// Mean curvature in the outward-from-phase-1 convention, `+½⟨∇·n⟩ = -H`.
    pub fn outward_mean_curvature(&self) -> f64 {
        -self.mean_curvature_avg
    }
}

/// Area-weighted mean and standard deviation of `∇·n` on Γ.
///
/// Each band cell contributes the curvature interpolated at its closest point
/// on the zero set, `x - φ n`, so the spread measures variation along the
/// surface rather than across the band.
pub fn interface_curvature_stats(phi: &ScalarField, geo: &Geometry, params: SmoothingParams) -> (f64, f64) {
    let g = *phi.grid();
    let h = g.spacing();
    let inv2h = [0.5 / h[0], 0.5 / h[1], 0.5 / h[2]];
    let v = phi.values();
    let norm = geo.grad_norm.values();
    let dv = g.cell_volume();
    let [w, s1, s2] = g.sum_cells(|s| {
        let c = s.center();
        let w = smoothed_delta(v[c], params) * norm[c] * dv;
        if w == 0.0 {
            return [0.0; 3];
        }
        let d = central_gradient_at(v, s, inv2h);
        let n = norm[c].max(GRADIENT_FLOOR);
        let [i, j, k] = s.ijk();
        let x = g.coord(i, j, k);
        let p = [
            x[0] - v[c] * d[0] / (n * n),
            x[1] - v[c] * d[1] / (n * n),
            x[2] - v[c] * d[2] / (n * n),
        ];
        let kappa = geo.curvature.interpolate(p);
        [w, w * kappa, w * kappa * kappa]
    });
    if w <= 0.0 {
        return (0.0, 0.0);
    }
    let mean = s1 / w;
    (mean, (s2 / w - mean * mean).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;

    fn sphere(n: usize, r: f64) -> ScalarField {
        let g = PeriodicGrid::cubic(n).unwrap();
        ScalarField::from_fn(g, move |p| {
            let d = [p[0] - 0.5, p[1] - 0.5, p[2] - 0.5];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() - r
        })
    }

    fn plane(n: usize) -> ScalarField {
        let g = PeriodicGrid::cubic(n).unwrap();
        ScalarField::from_fn(g, |p| p[2] - 0.5)
    }

    #[test]
    fn delta_values() {
        let p = SmoothingParams::new(0.03).unwrap();
        assert!((smoothed_delta(0.0, p) - 1.0 / 0.03).abs() < 1e-12);
        assert!(smoothed_delta(0.03, p).abs() < 1e-12);
        assert_eq!(smoothed_delta(0.031, p), 0.0);
        assert!(SmoothingParams::new(0.0).is_err());
        assert!(SmoothingParams::new(-1.0).is_err());
    }

    #[test]
    fn delta_integrates_to_one() {
        let eps = 0.03;
        let p = SmoothingParams::new(eps).unwrap();
        let dx = eps / 30.0;
        let total: f64 = (0..60)
            .map(|i| smoothed_delta(-eps + (i as f64 + 0.5) * dx, p) * dx)
            .sum();
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn heaviside_values_and_derivative() {
        let eps = 0.05;
        let p = SmoothingParams::new(eps).unwrap();
        assert_eq!(smoothed_heaviside(0.0, p), 0.5);
        assert_eq!(smoothed_heaviside(-2.0 * eps, p), 0.0);
        assert_eq!(smoothed_heaviside(2.0 * eps, p), 1.0);
        let x = eps / 2.0;
        let step = 1e-5 * eps;
        let fd = (smoothed_heaviside(x + step, p) - smoothed_heaviside(x - step, p)) / (2.0 * step);
        assert!((fd - smoothed_delta(x, p)).abs() < 1e-6, "{fd}");
    }

    #[test]
    fn sphere_area_and_volume() {
        let phi = sphere(100, 0.25);
        let p = SmoothingParams::default_for(phi.grid());
        let a = surface_area(&phi, p).unwrap();
        let exact = 4.0 * PI * 0.25f64.powi(2);
        assert!((a / exact - 1.0).abs() < 0.01, "{a}");
        let f = volume_fraction(&phi, p);
        let exact = 4.0 / 3.0 * PI * 0.25f64.powi(3);
        // Smoothing shifts the measured volume by ∫ g(d) V'(d) dd with the odd
        // kernel g = (1 - H_ε) - 1{d<0}; for V'(d) = 4π(r + d)² that is
        // 8πr · 2ε²(1/12 - 1/(2π²)) to leading order (≈0.56% here).
        let eps = p.epsilon;
        let bias = 8.0 * PI * 0.25 * 2.0 * eps * eps * (1.0 / 12.0 - 0.5 / (PI * PI));
        assert!(((f - bias) / exact - 1.0).abs() < 1e-3, "{f}");
        assert!((f / exact - 1.0).abs() < 0.006, "{f}");
    }

    #[test]
    fn plane_area_is_one() {
        let phi = plane(32);
        let p = SmoothingParams::default_for(phi.grid());
        let a = surface_area(&phi, p).unwrap();
        assert!((a - 1.0).abs() < 1e-6, "{a}");
        let k = mean_curvature_divergence(&phi);
        for (&v, &c) in phi.values().iter().zip(k.values()) {
            if v.abs() < 0.2 {
                assert!(c.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn volume_fraction_edge_cases() {
        let g = PeriodicGrid::cubic(16).unwrap();
        let p = SmoothingParams::default_for(&g);
        assert_eq!(volume_fraction(&ScalarField::constant(g, 1.0), p), 0.0);
        let nodal = ScalarField::from_fn(g, |x| {
            (2.0 * PI * x[0]).cos() + (2.0 * PI * x[1]).cos() + (2.0 * PI * x[2]).cos()
        });
        assert!((volume_fraction(&nodal, p) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn sphere_curvature_and_lagrange_multiplier() {
        let r = 0.25;
        let phi = sphere(100, r);
        let p = SmoothingParams::default_for(phi.grid());
        let k = mean_curvature_divergence(&phi);
        for (&v, &c) in phi.values().iter().zip(k.values()) {
            if v.abs() <= p.epsilon {
                // ∇·n = 2/(r + φ) off the surface; check the band against 2/r.
                assert!((c / (2.0 / r) - 1.0).abs() < 0.15, "{c} at {v}");
            }
        }
        let lambda = lagrange_multiplier(&phi, p).unwrap();
        assert!((lambda / (-2.0 / r) - 1.0).abs() < 0.05, "{lambda}");
        let m = SurfaceMetrics::evaluate(&phi, p).unwrap();
        assert_eq!(m.mean_curvature_avg, m.lagrange_multiplier / 2.0);
        assert!((m.mean_curvature_avg + 1.0 / r).abs() < 0.05 / r);
        assert!(m.curvature_stddev < 0.1 * 2.0 / r, "{}", m.curvature_stddev);
    }

    #[test]
    fn surface_integral_cases() {
        let r = 0.25;
        let phi = sphere(100, r);
        let p = SmoothingParams::default_for(phi.grid());
        let g = *phi.grid();
        let ones = surface_integral(&phi, &ScalarField::constant(g, 1.0), p).unwrap();
        assert_eq!(ones, surface_area(&phi, p).unwrap());
        assert_eq!(surface_integral(&phi, &ScalarField::constant(g, 0.0), p).unwrap(), 0.0);
        let k = mean_curvature_divergence(&phi);
        let ik = surface_integral(&phi, &k, p).unwrap();
        assert!((ik / (8.0 * PI * r) - 1.0).abs() < 0.05, "{ik}");
    }

    #[test]
    fn lagrange_multiplier_matches_mean_curvature_field() {
        let phi = sphere(48, 0.3).map(|v| v * 1.0);
        let p = SmoothingParams::default_for(phi.grid());
        let lambda = lagrange_multiplier(&phi, p).unwrap();
        // H field = -½ ∇·n; λ = 2 × its area-weighted mean.
        let h = mean_curvature_divergence(&phi).map(|k| -0.5 * k);
        let area = surface_area(&phi, p).unwrap();
        let mean_h = surface_integral(&phi, &h, p).unwrap() / area;
        assert!((lambda - 2.0 * mean_h).abs() < 1e-12);
    }

    #[test]
    fn empty_surface_is_reported() {
        let g = PeriodicGrid::cubic(16).unwrap();
        let p = SmoothingParams::default_for(&g);
        let phi = ScalarField::constant(g, 1.0);
        assert_eq!(lagrange_multiplier(&phi, p), Err(Error::EmptySurface));
        assert_eq!(surface_area(&phi, p).unwrap(), 0.0);
    }

    #[test]
    fn distorted_field_is_reported() {
        let phi = sphere(32, 0.25).scaled(20.0);
        let p = SmoothingParams::default_for(phi.grid());
        assert!(matches!(surface_area(&phi, p), Err(Error::DistortedField { .. })));
    }

    #[test]
    fn phase_swap_and_mirror_symmetry() {
        let g = PeriodicGrid::cubic(40).unwrap();
        let phi = ScalarField::from_fn(g, |x| {
            let d = [x[0] - 0.45, x[1] - 0.5, x[2] - 0.55];
            (d[0] * d[0] + 1.3 * d[1] * d[1] + d[2] * d[2]).sqrt() - 0.3
        });
        let p = SmoothingParams::default_for(&g);
        let neg = phi.scaled(-1.0);
        let f = volume_fraction(&phi, p);
        assert!((volume_fraction(&neg, p) - (1.0 - f)).abs() < 1e-12);
        let a = surface_area(&phi, p).unwrap();
        assert!((surface_area(&neg, p).unwrap() - a).abs() < 1e-12);
        let m = SurfaceMetrics::evaluate(&phi, p).unwrap();
        for axis in 0..3 {
            let r = SurfaceMetrics::evaluate(&phi.reflected(axis), p).unwrap();
            assert!((r.area - m.area).abs() < 1e-12);
            assert!((r.volume_fraction - m.volume_fraction).abs() < 1e-12);
            assert!((r.lagrange_multiplier - m.lagrange_multiplier).abs() < 1e-12);
        }
    }
}
