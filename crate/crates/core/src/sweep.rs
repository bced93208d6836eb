//! Family studies: optimized surfaces over a range of volume fractions.
//!
//! Runs proceed outward from `f = 0.5` on each side, and every run starts
//! from the converged field of its inner neighbor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::initializers::Family;
use crate::optimizer::{optimize, OptimizerConfig, RunRecord, RunStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub family: Family,
    pub fractions: Vec<f64>,
    pub grid_size: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::InvalidParameter(
                "sweep needs at least one volume fraction".into(),
            ));
        }
        for &f in &self.fractions {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "sweep fraction {f} must lie in (0, 1)"
                )));
            }
        }
        Ok(())
    }

    /// Two branches of targets, each ordered outward from 0.5: fractions at
    /// or below 0.5 descending, those above ascending. Duplicates are dropped.
    pub fn branches(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lower: Vec<f64> = self.fractions.iter().copied().filter(|&f| f <= 0.5).collect();
        let mut upper: Vec<f64> = self.fractions.iter().copied().filter(|&f| f > 0.5).collect();
        lower.sort_by(|a, b| b.total_cmp(a));
        upper.sort_by(|a, b| a.total_cmp(b));
        lower.dedup();
        upper.dedup();
        (lower, upper)
    }
}

/// One `f, H, A` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub target: f64,
    pub volume_fraction: f64,
    /// `H = λ / 2`.
    pub mean_curvature: f64,
    pub area: f64,
    pub curvature_stddev: f64,
    pub iterations: usize,
    pub status: RunStatus,
}

impl SweepRow {
    fn from_run(target: f64, rec: &RunRecord) -> Self {
        let m = rec.final_metrics;
        Self {
            target,
            volume_fraction: m.map_or(f64::NAN, |m| m.volume_fraction),
            mean_curvature: m.map_or(f64::NAN, |m| m.mean_curvature_avg),
            area: m.map_or(f64::NAN, |m| m.area),
            curvature_stddev: m.map_or(f64::NAN, |m| m.curvature_stddev),
            iterations: rec.rows.last().map_or(0, |r| r.iter),
            status: rec.status.clone(),
        }
    }

    pub fn converged(&self) -> bool {
        self.status == RunStatus::ConvergedArea
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.14e},{:.14e},{}",
            self.target, self.mean_curvature, self.area, self.status
        )
    }
}

pub const SWEEP_CSV_HEADER: &str = "f,H,A,status";

/// Runs every fraction of `fractions`, starting each branch from `seed`.
/// A failed run is recorded and its branch continues from the last good
/// field. `on_row` sees each row and its final field as soon as it is done.
pub fn run_sweep<F>(seed: &ScalarField, spec: &SweepSpec, cfg: &OptimizerConfig, mut on_row: F) -> Result<Vec<SweepRow>>
where
    F: FnMut(&SweepRow, &ScalarField),
{
    spec.validate()?;
    cfg.validate(seed.grid())?;
    let (lower, upper) = spec.branches();
    let mut rows = Vec::new();
    for branch in [lower, upper] {
        let mut start = seed.clone();
        for f in branch {
            let (field, rec) = optimize(&start, f, cfg)?;
            let row = SweepRow::from_run(f, &rec);
            on_row(&row, &field);
            if !matches!(rec.status, RunStatus::Failed(_)) {
                start = field;
            }
            rows.push(row);
        }
    }
    rows.sort_by(|a, b| a.target.total_cmp(&b.target));
    Ok(rows)
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}
