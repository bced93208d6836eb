//! Steepest descent of surface area at fixed volume fraction.
//!
//! Each iteration moves the surface with normal speed `-(∇·n + λ)`, where
//! `λ = -⟨∇·n⟩_Γ` keeps the volume stationary to first order:
//! `φ ← φ + β [κ |∇φ| + λ |∇φ|]`, `κ` being `∇·n` extended off the interface
//! along normals. The curvature term uses central differences and the `λ`
//! term a Godunov upwind norm. Volume drift is corrected by the Newton
//! corrector and the field is reinitialized periodically.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraint::{drive_with, newton_volume_correction, ContinuationParams, NewtonParams};
use crate::error::{Error, Result};
use crate::grid::{central_gradient_at, godunov_norm_eno2_at, PeriodicGrid, ScalarField};
use crate::metrics::{
    check_band, lagrange_from_geometry, smoothed_delta, volume_fraction, Geometry, SmoothingParams, SurfaceMetrics,
    GRADIENT_FLOOR,
};
use crate::reinit::{reinitialize, straddles, ReinitParams};

pub const DEFAULT_EXTENSION_SWEEPS: usize = 20;

/// Consecutive sub-tolerance area changes required to stop.
pub const STOP_WINDOW: usize = 5;

/// Volume-fraction accuracy guaranteed for the returned field.
pub const FINAL_VOLUME_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub beta: f64,
    pub area_tol: f64,
    pub reinit_every: usize,
    pub drift_tol: f64,
    pub max_iters: usize,
    pub extension_sweeps: usize,
    pub smoothing: SmoothingParams,
    pub newton: NewtonParams,
    pub continuation: ContinuationParams,
    pub reinit: ReinitParams,
}

impl OptimizerConfig {
    /// Largest stable `β` for the explicit curvature term.
    pub fn max_beta(grid: &PeriodicGrid) -> f64 {
        grid.min_spacing().powi(2) / 6.0
    }

    pub fn default_for(grid: &PeriodicGrid) -> Self {
        Self {
            beta: Self::max_beta(grid),
            area_tol: 1e-6,
            reinit_every: 10,
            drift_tol: 1e-4,
            max_iters: 100_000,
            extension_sweeps: DEFAULT_EXTENSION_SWEEPS,
            smoothing: SmoothingParams::default_for(grid),
            newton: NewtonParams::default_for(grid),
            continuation: ContinuationParams::default(),
            reinit: ReinitParams::default_for(grid),
        }
    }

    pub fn validate(&self, grid: &PeriodicGrid) -> Result<()> {
        let limit = Self::max_beta(grid);
        if !(self.beta > 0.0) || self.beta > limit * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "beta {} must lie in (0, {limit}] for stability",
                self.beta
            )));
        }
        if !(self.area_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "area_tol must be positive, got {}",
                self.area_tol
            )));
        }
        if !(self.drift_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "drift_tol must be positive, got {}",
                self.drift_tol
            )));
        }
        if self.reinit_every == 0 {
            return Err(Error::InvalidParameter("reinit_every must be at least 1".into()));
        }
        if !(self.smoothing.epsilon > 0.0) {
            return Err(Error::InvalidParameter("smoothing epsilon must be positive".into()));
        }
        self.newton.validate()?;
        self.continuation.validate()?;
        self.reinit.validate(grid, self.smoothing.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub iter: usize,
    pub area: f64,
    pub volume_fraction: f64,
    pub lambda: f64,
    /// Previous area minus this area; zero on the first row.
    pub delta_area: f64,
    pub newton_invoked: bool,
    pub reinit_invoked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    ConvergedArea,
    MaxIters,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub status: RunStatus,
    /// Metrics of the returned field, when it could be measured.
    pub final_metrics: Option<SurfaceMetrics>,
}

pub const CSV_HEADER: &str = "iter,area,volume_fraction,lambda,delta_area,newton,reinit";

impl RunRow {
    /// One CSV line, reals at 15 significant digits.
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.14e},{:.14e},{:.14e},{:.14e},{},{}",
            self.iter,
            self.area,
            self.volume_fraction,
            self.lambda,
            self.delta_area,
            self.newton_invoked as u8,
            self.reinit_invoked as u8
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("malformed record row '{line}'"));
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 7 {
            return Err(bad());
        }
        let real = |i: usize| cols[i].trim().parse::<f64>().map_err(|_| bad());
        let flag = |i: usize| match cols[i].trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad()),
        };
        Ok(Self {
            iter: cols[0].trim().parse().map_err(|_| bad())?,
            area: real(1)?,
            volume_fraction: real(2)?,
            lambda: real(3)?,
            delta_area: real(4)?,
            newton_invoked: flag(5)?,
            reinit_invoked: flag(6)?,
        })
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::ConvergedArea => f.write_str("converged"),
            RunStatus::MaxIters => f.write_str("max-iters"),
            RunStatus::Failed(reason) => write!(f, "failed: {reason}"),
        }
    }
}

impl FromStr for RunStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "converged" => Ok(RunStatus::ConvergedArea),
            "max-iters" => Ok(RunStatus::MaxIters),
            other => other
                .strip_prefix("failed: ")
                .map(|r| RunStatus::Failed(r.to_string()))
                .ok_or_else(|| Error::InvalidParameter(format!("unknown run status '{other}'"))),
        }
    }
}

impl RunRecord {
    /// `stddev(∇·n) / max(1, |λ|)` of the returned field.
    pub fn curvature_spread(&self) -> Option<f64> {
        self.final_metrics
            .map(|m| m.curvature_stddev / m.lagrange_multiplier.abs().max(1.0))
    }

    /// Header, one line per row, then `# status: ...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out.push_str(&format!("# status: {}\n", self.status));
        out
    }

    /// Parses the output of [`RunRecord::to_csv`]. Final metrics are not
    /// stored in the CSV.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut status = RunStatus::MaxIters;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(s) = line.strip_prefix("# status:") {
                status = s.parse()?;
            } else if line != CSV_HEADER {
                rows.push(RunRow::from_csv(line)?);
            }
        }
        Ok(Self {
            rows,
            status,
            final_metrics: None,
        })
    }
}

/// Transports `v` along `sgn(φ) n` for `sweeps` pseudo-time steps of half a
/// cell, so values flow outward from the zero set and become constant along
/// normals. Cells whose 6-neighborhood straddles the zero set keep their input
/// value.
pub fn extend_velocity(v: &ScalarField, phi: &ScalarField, sweeps: usize) -> ScalarField {
    extend_within(v, phi, sweeps, f64::INFINITY)
}

/// [`extend_velocity`] restricted to cells with `|φ| < limit`.
fn extend_within(v: &ScalarField, phi: &ScalarField, sweeps: usize, limit: f64) -> ScalarField {
    let g = *phi.grid();
    let h = g.spacing();
    let inv2h = [0.5 / h[0], 0.5 / h[1], 0.5 / h[2]];
    let hmin = g.min_spacing();
    let dt = 0.5 * hmin;
    let p = phi.values();

    // Each moving cell relaxes toward its upwind neighbors:
    // q ← q - dt Σ_a (|w_a| / h_a) (q - q_upwind(a)).
    let links: Vec<Upwind> = g.filter_cells(|s| {
        let c = s.center();
        if p[c].abs() >= limit || straddles(p, s) {
            return None;
        }
        let d = central_gradient_at(p, s, inv2h);
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if n < GRADIENT_FLOOR {
            return None;
        }
        let sgn = p[c] / (p[c] * p[c] + hmin * hmin).sqrt();
        let mut up = Upwind {
            cell: c,
            from: [c; 3],
            coef: [0.0; 3],
        };
        for a in 0..3 {
            let u = sgn * d[a] / n;
            up.from[a] = s.neighbor(a, u < 0.0);
            up.coef[a] = dt * u.abs() / h[a];
        }
        Some(up)
    });

    let mut cur = v.values().to_vec();
    for _ in 0..sweeps {
        let next: Vec<f64> = links
            .par_iter()
            .map(|l| {
                let q = cur[l.cell];
                q - l.coef[0] * (q - cur[l.from[0]])
                    - l.coef[1] * (q - cur[l.from[1]])
                    - l.coef[2] * (q - cur[l.from[2]])
            })
            .collect();
        for (l, q) in links.iter().zip(next) {
            cur[l.cell] = q;
        }
    }
    ScalarField::from_raw(g, cur)
}

struct Upwind {
    cell: usize,
    from: [usize; 3],
    coef: [f64; 3],
}

/// Extended `∇·n`. Interface-adjacent cells take the curvature interpolated at
/// their closest point on the zero set, `x - φ ∇φ / |∇φ|²`; cells beyond the
/// reach of the extension get zero.
pub(crate) fn extended_curvature(phi: &ScalarField, geo: &Geometry, sweeps: usize) -> Vec<f64> {
    let g = *phi.grid();
    let h = g.spacing();
    let inv2h = [0.5 / h[0], 0.5 / h[1], 0.5 / h[2]];
    let v = phi.values();
    let kappa = &geo.curvature;
    let seeded = g.map_cells(|s| {
        let c = s.center();
        if !straddles(v, s) {
            return kappa.values()[c];
        }
        let d = central_gradient_at(v, s, inv2h);
        let n2 = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).max(GRADIENT_FLOOR);
        let [i, j, k] = s.ijk();
        let x = g.coord(i, j, k);
        kappa.interpolate([
            x[0] - v[c] * d[0] / n2,
            x[1] - v[c] * d[1] / n2,
            x[2] - v[c] * d[2] / n2,
        ])
    });
    let reach = (sweeps as f64 * 0.5 + 1.0) * g.min_spacing();
    let ext = extend_within(&ScalarField::from_raw(g, seeded), phi, sweeps, reach);
    ext.into_values()
        .into_iter()
        .zip(v)
        .map(|(k, p)| if p.abs() < reach { k } else { 0.0 })
        .collect()
}

/// One explicit descent step. Returns the updated field and the `λ` used.
pub fn descent_step(phi: &ScalarField, cfg: &OptimizerConfig) -> Result<(ScalarField, f64)> {
    let geo = Geometry::of(phi);
    check_band(phi, &geo.grad_norm, cfg.smoothing)?;
    let lambda = lagrange_from_geometry(phi, &geo, cfg.smoothing)?;
    let kappa = extended_curvature(phi, &geo, cfg.extension_sweeps);
    let g = *phi.grid();
    let h = g.spacing();
    let v = phi.values();
    let norm = geo.grad_norm.values();
    let speed_sign = -lambda.signum();
    let beta = cfg.beta;
    let out = g.map_cells(|s| {
        let c = s.center();
        let upwind = godunov_norm_eno2_at(v, s, h, speed_sign);
        v[c] + beta * (kappa[c] * norm[c] + lambda * upwind)
    });
    Ok((ScalarField::from_raw(g, out), lambda))
}

/// Smoothed-delta area, without the band check.
fn area_of(phi: &ScalarField, smoothing: SmoothingParams) -> f64 {
    let geo_norm = crate::grid::gradient_norm_central(phi);
    let g = *phi.grid();
    let v = phi.values();
    let n = geo_norm.values();
    let [a] = g.sum_cells(|s| {
        let c = s.center();
        [smoothed_delta(v[c], smoothing) * n[c]]
    });
    a * g.cell_volume()
}

/// Runs the full pipeline from `phi0`. Invalid inputs are errors; numerical
/// failures during the run end it with [`RunStatus::Failed`].
pub fn optimize(phi0: &ScalarField, f_target: f64, cfg: &OptimizerConfig) -> Result<(ScalarField, RunRecord)> {
    optimize_with(phi0, f_target, cfg, |_, _| {})
}

/// [`optimize`] with an observer called after every recorded row.
pub fn optimize_with<F>(
    phi0: &ScalarField,
    f_target: f64,
    cfg: &OptimizerConfig,
    mut observe: F,
) -> Result<(ScalarField, RunRecord)>
where
    F: FnMut(&RunRow, &ScalarField),
{
    let grid = *phi0.grid();
    cfg.validate(&grid)?;
    if !(f_target > 0.0 && f_target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target volume fraction {f_target} must lie in (0, 1)"
        )));
    }
    let mut record = RunRecord {
        rows: Vec::new(),
        status: RunStatus::MaxIters,
        final_metrics: None,
    };
    let fail = |record: &mut RunRecord, e: Error| record.status = RunStatus::Failed(e.to_string());

    let init = reinitialize(phi0, &cfg.reinit)
        .and_then(|p| {
            drive_with(
                &p,
                f_target,
                &cfg.continuation,
                &cfg.newton,
                cfg.smoothing,
                &cfg.reinit,
                |_, _| {},
            )
        })
        .and_then(|p| reinitialize(&p, &cfg.reinit))
        .and_then(|p| settle(p, f_target, cfg));
    let mut phi = match init {
        Ok((p, _)) => p,
        Err(e) => {
            fail(&mut record, e);
            return Ok((phi0.clone(), record));
        }
    };
    let first = RunRow {
        iter: 0,
        area: area_of(&phi, cfg.smoothing),
        volume_fraction: volume_fraction(&phi, cfg.smoothing),
        lambda: 0.0,
        delta_area: 0.0,
        newton_invoked: true,
        reinit_invoked: true,
    };
    observe(&first, &phi);
    record.rows.push(first);

    let mut quiet = 0;
    for iter in 1..=cfg.max_iters {
        match iterate(&phi, iter, f_target, cfg) {
            Ok((next, mut row)) => {
                let prev = record.rows.last().expect("first row is always recorded").area;
                row.delta_area = prev - row.area;
                phi = next;
                observe(&row, &phi);
                record.rows.push(row);
                quiet = if row.delta_area.abs() < cfg.area_tol {
                    quiet + 1
                } else {
                    0
                };
                if quiet >= STOP_WINDOW {
                    record.status = RunStatus::ConvergedArea;
                    break;
                }
            }
            Err(e) => {
                fail(&mut record, e);
                break;
            }
        }
    }

    if volume_drift(&phi, f_target, cfg) > FINAL_VOLUME_TOL {
        match correct_volume(&phi, f_target, cfg) {
            Ok(p) => phi = p,
            Err(e) => fail(&mut record, e),
        }
    }
    if volume_drift(&phi, f_target, cfg) > FINAL_VOLUME_TOL && !matches!(record.status, RunStatus::Failed(_)) {
        record.status = RunStatus::Failed(format!(
            "final volume fraction {} misses the target {f_target}",
            volume_fraction(&phi, cfg.smoothing)
        ));
    }
    record.final_metrics = SurfaceMetrics::evaluate(&phi, cfg.smoothing).ok();
    Ok((phi, record))
}

fn volume_drift(phi: &ScalarField, f_target: f64, cfg: &OptimizerConfig) -> f64 {
    (volume_fraction(phi, cfg.smoothing) - f_target).abs()
}

fn correct_volume(phi: &ScalarField, f_target: f64, cfg: &OptimizerConfig) -> Result<ScalarField> {
    let p = reinitialize(phi, &cfg.reinit)?;
    let (p, _, _) = newton_volume_correction(&p, f_target, &cfg.newton, cfg.smoothing)?;
    Ok(p)
}

/// Restores the volume fraction when it has drifted past `drift_tol`.
/// Returns the field and whether a correction ran.
fn settle(phi: ScalarField, f_target: f64, cfg: &OptimizerConfig) -> Result<(ScalarField, bool)> {
    if volume_drift(&phi, f_target, cfg) > cfg.drift_tol {
        Ok((correct_volume(&phi, f_target, cfg)?, true))
    } else {
        Ok((phi, false))
    }
}

fn iterate(phi: &ScalarField, iter: usize, f_target: f64, cfg: &OptimizerConfig) -> Result<(ScalarField, RunRow)> {
    let mut reinit_invoked = false;
    let (mut cur, lambda) = match descent_step(phi, cfg) {
        Err(Error::DistortedField { .. }) => {
            reinit_invoked = true;
            descent_step(&reinitialize(phi, &cfg.reinit)?, cfg)?
        }
        other => other?,
    };
    if iter.is_multiple_of(cfg.reinit_every) {
        reinit_invoked = true;
        cur = reinitialize(&cur, &cfg.reinit)?;
    }
    // Correcting here rather than before the next step keeps every recorded
    // row within the drift tolerance.
    let (cur, newton_invoked) = settle(cur, f_target, cfg)?;
    if !cur.is_finite() {
        return Err(Error::NonFinite(format!("field after iteration {iter}")));
    }
    let row = RunRow {
        iter,
        area: area_of(&cur, cfg.smoothing),
        volume_fraction: volume_fraction(&cur, cfg.smoothing),
        lambda,
        delta_area: 0.0,
        newton_invoked,
        reinit_invoked: reinit_invoked || newton_invoked,
    };
    Ok((cur, row))
}
