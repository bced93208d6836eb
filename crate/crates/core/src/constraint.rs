//! Volume-fraction correction.
//!
//! The corrected field is `φ₀ + δφ(λ)` with `δφ(λ) = α (κ + λ) |∇φ₀|`, where
//! `κ` is the extended `∇·n` of `φ₀`. Both `κ` and `|∇φ₀|` are frozen at `φ₀`,
//! so `f(λ)` is a smooth scalar function and its derivative
//! `-α ∫ δ_ε(φ₀ + δφ) |∇φ₀| dV` is exact. Distant targets are reached through
//! a sequence of nearby ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, ScalarField};
use crate::metrics::{smoothed_delta, smoothed_heaviside, volume_fraction, Geometry, SmoothingParams};
use crate::optimizer::{extended_curvature, DEFAULT_EXTENSION_SWEEPS};
use crate::reinit::{reinitialize, ReinitParams};

/// `|D_λ f|` below this means the zero set has effectively vanished.
pub const MIN_DERIVATIVE: f64 = 1e-10;

/// Maximum number of step halvings when a Newton step overshoots.
pub const MAX_HALVINGS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonParams {
    /// Scale of the correction, `δφ = α (κ + λ) |∇φ|`.
    pub alpha: f64,
    /// Accepted `|f - f₀|`.
    pub tol: f64,
    pub max_iters: usize,
    pub lambda_init: f64,
}

impl NewtonParams {
    /// `α = (min Δx)²`.
    pub fn default_for(grid: &PeriodicGrid) -> Self {
        Self {
            alpha: grid.min_spacing().powi(2),
            tol: 1e-6,
            max_iters: 50,
            lambda_init: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "newton alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "newton tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("newton max_iters must be at least 1".into()));
        }
        if !self.lambda_init.is_finite() {
            return Err(Error::InvalidParameter("newton lambda_init must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationParams {
    /// Largest change of the target fraction per stage.
    pub max_step: f64,
    /// Reinitialize the field between stages.
    pub reinit_between: bool,
}

impl Default for ContinuationParams {
    fn default() -> Self {
        Self {
            max_step: 0.05,
            reinit_between: true,
        }
    }
}

impl ContinuationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_step > 0.0 && self.max_step <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "continuation max_step must lie in (0, 0.5], got {}",
                self.max_step
            )));
        }
        Ok(())
    }
}

fn check_target(f_target: f64) -> Result<()> {
    if !(f_target > 0.0 && f_target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target volume fraction {f_target} must lie in (0, 1)"
        )));
    }
    Ok(())
}

/// Frozen data for `f(λ)`: base values, the curvature part of `δφ` and the
/// `λ` coefficient `α |∇φ₀|`.
struct Correction {
    grid: PeriodicGrid,
    base: Vec<f64>,
    shape: Vec<f64>,
    slope: Vec<f64>,
    smoothing: SmoothingParams,
}

impl Correction {
    fn new(phi: &ScalarField, alpha: f64, smoothing: SmoothingParams) -> Self {
        let geo = Geometry::of(phi);
        let kappa = extended_curvature(phi, &geo, DEFAULT_EXTENSION_SWEEPS);
        let slope: Vec<f64> = geo.grad_norm.values().iter().map(|n| alpha * n).collect();
        let shape = kappa.iter().zip(&slope).map(|(k, s)| k * s).collect();
        Self {
            grid: *phi.grid(),
            base: phi.values().to_vec(),
            shape,
            slope,
            smoothing,
        }
    }

    /// `(f(λ), D_λ f(λ))`.
    fn evaluate(&self, lambda: f64) -> (f64, f64) {
        let p = self.smoothing;
        let [vol, deriv] = self.grid.sum_cells(|s| {
            let c = s.center();
            let phi = self.base[c] + self.shape[c] + lambda * self.slope[c];
            [
                1.0 - smoothed_heaviside(phi, p),
                -smoothed_delta(phi, p) * self.slope[c],
            ]
        });
        let dv = self.grid.cell_volume();
        (vol * dv, deriv * dv)
    }

    fn field(&self, lambda: f64) -> ScalarField {
        let values = self
            .base
            .iter()
            .zip(&self.shape)
            .zip(&self.slope)
            .map(|((b, k), s)| b + k + lambda * s)
            .collect();
        ScalarField::from_raw(self.grid, values)
    }
}

/// Newton iterates of one correction, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonTrace {
    pub lambda: f64,
    pub iterations: usize,
    /// `|f - f₀|` before each update and at the end.
    pub residuals: Vec<f64>,
}

/// Solves `f(φ₀ + δφ(λ)) = f₀` for `λ`. Returns the corrected field, `λ*` and
/// the number of Newton updates taken.
pub fn newton_volume_correction(
    phi: &ScalarField,
    f_target: f64,
    params: &NewtonParams,
    smoothing: SmoothingParams,
) -> Result<(ScalarField, f64, usize)> {
    newton_with_trace(phi, f_target, params, smoothing).map(|(f, t)| (f, t.lambda, t.iterations))
}

pub fn newton_with_trace(
    phi: &ScalarField,
    f_target: f64,
    params: &NewtonParams,
    smoothing: SmoothingParams,
) -> Result<(ScalarField, NewtonTrace)> {
    check_target(f_target)?;
    params.validate()?;
    if !phi.has_sign_change() {
        return Err(Error::EmptySurface);
    }
    let corr = Correction::new(phi, params.alpha, smoothing);
    let mut lambda = params.lambda_init;
    let (mut f, mut d) = corr.evaluate(lambda);
    let mut residuals = vec![(f - f_target).abs()];
    let mut iterations = 0;
    while (f - f_target).abs() > params.tol {
        if iterations >= params.max_iters {
            return Err(Error::NoConvergence {
                iterations,
                residual: (f - f_target).abs(),
            });
        }
        if d.abs() < MIN_DERIVATIVE {
            return Err(Error::DerivativeVanished(d));
        }
        assert!(d < 0.0, "volume fraction must decrease with lambda (got D = {d})");
        let err = (f - f_target).abs();
        let mut step = -(f - f_target) / d;
        let mut trial = corr.evaluate(lambda + step);
        let mut halvings = 0;
        while (trial.0 - f_target).abs() > err && halvings < MAX_HALVINGS {
            step *= 0.5;
            trial = corr.evaluate(lambda + step);
            halvings += 1;
        }
        lambda += step;
        (f, d) = trial;
        iterations += 1;
        residuals.push((f - f_target).abs());
    }
    Ok((
        corr.field(lambda),
        NewtonTrace {
            lambda,
            iterations,
            residuals,
        },
    ))
}

/// One completed continuation stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    pub target: f64,
    pub lambda: f64,
    pub iterations: usize,
}

/// Stage targets from `f_start` to `f_target`, evenly spaced with steps of
/// at most `max_step`. Always at least one stage.
pub fn stage_targets(f_start: f64, f_target: f64, max_step: f64) -> Vec<f64> {
    let gap = f_target - f_start;
    let stages = ((gap.abs() / max_step) - 1e-9).ceil().max(1.0) as usize;
    (1..=stages)
        .map(|k| {
            if k == stages {
                f_target
            } else {
                f_start + gap * k as f64 / stages as f64
            }
        })
        .collect()
}

/// Moves the volume fraction to `f_target` in stages, with default reinit
/// parameters for the grid.
pub fn drive_to_volume_fraction(
    phi: &ScalarField,
    f_target: f64,
    cont: &ContinuationParams,
    newton: &NewtonParams,
    smoothing: SmoothingParams,
) -> Result<ScalarField> {
    let reinit = ReinitParams::default_for(phi.grid());
    drive_with(phi, f_target, cont, newton, smoothing, &reinit, |_, _| {})
}

/// Continuation with explicit reinit parameters. `on_stage` sees every
/// completed stage and its corrected field.
pub fn drive_with<F>(
    phi: &ScalarField,
    f_target: f64,
    cont: &ContinuationParams,
    newton: &NewtonParams,
    smoothing: SmoothingParams,
    reinit: &ReinitParams,
    mut on_stage: F,
) -> Result<ScalarField>
where
    F: FnMut(&StageReport, &ScalarField),
{
    check_target(f_target)?;
    cont.validate()?;
    let f_start = volume_fraction(phi, smoothing);
    let targets = stage_targets(f_start, f_target, cont.max_step);
    let mut cur = phi.clone();
    let last = targets.len() - 1;
    for (stage, &target) in targets.iter().enumerate() {
        let wrap = |e: Error| Error::Stage {
            stage,
            target,
            source: Box::new(e),
        };
        let (next, lambda, iterations) = newton_volume_correction(&cur, target, newton, smoothing).map_err(wrap)?;
        on_stage(
            &StageReport {
                stage,
                target,
                lambda,
                iterations,
            },
            &next,
        );
        cur = if cont.reinit_between && stage < last {
            reinitialize(&next, reinit).map_err(wrap)?
        } else {
            next
        };
    }
    Ok(cur)
}
