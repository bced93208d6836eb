//! TOML run configuration. Every key is optional and mirrors a field of
//! `OptimizerConfig`; missing keys keep the grid-dependent defaults.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;
use tpms_core::metrics::DEFAULT_EPSILON_MULT;
use tpms_core::optimizer::OptimizerConfig;
use tpms_core::{PeriodicGrid, SmoothingParams};

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub beta: Option<f64>,
    pub area_tol: Option<f64>,
    pub reinit_every: Option<usize>,
    pub drift_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub extension_sweeps: Option<usize>,
    /// Smoothing half-width in units of the grid spacing.
    pub epsilon_mult: Option<f64>,
    #[serde(default)]
    pub newton: NewtonSection,
    #[serde(default)]
    pub continuation: ContinuationSection,
    #[serde(default)]
    pub reinit: ReinitSection,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSection {
    pub alpha: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub lambda_init: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSection {
    pub max_step: Option<f64>,
    pub reinit_between: Option<bool>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReinitSection {
    pub band_width: Option<f64>,
    pub pseudo_time_step: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub convergence_tol: Option<f64>,
}

/// Command-line overrides, applied after the file.
#[derive(Debug, Default, Clone, Copy)]
pub struct Overrides {
    pub beta: Option<f64>,
    pub area_tol: Option<f64>,
    pub epsilon_mult: Option<f64>,
    pub max_iters: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn resolve(&self, grid: &PeriodicGrid, cli: &Overrides) -> Result<OptimizerConfig> {
        let mut c = OptimizerConfig::default_for(grid);
        let mult = cli.epsilon_mult.or(self.epsilon_mult).unwrap_or(DEFAULT_EPSILON_MULT);
        c.smoothing = SmoothingParams::for_grid(grid, mult)?;
        set(&mut c.beta, cli.beta.or(self.beta));
        set(&mut c.area_tol, cli.area_tol.or(self.area_tol));
        set(&mut c.reinit_every, self.reinit_every);
        set(&mut c.drift_tol, self.drift_tol);
        set(&mut c.max_iters, cli.max_iters.or(self.max_iters));
        set(&mut c.extension_sweeps, self.extension_sweeps);
        set(&mut c.newton.alpha, self.newton.alpha);
        set(&mut c.newton.tol, self.newton.tol);
        set(&mut c.newton.max_iters, self.newton.max_iters);
        set(&mut c.newton.lambda_init, self.newton.lambda_init);
        set(&mut c.continuation.max_step, self.continuation.max_step);
        set(&mut c.continuation.reinit_between, self.continuation.reinit_between);
        set(&mut c.reinit.band_width, self.reinit.band_width);
        set(&mut c.reinit.pseudo_time_step, self.reinit.pseudo_time_step);
        set(&mut c.reinit.max_sweeps, self.reinit.max_sweeps);
        set(&mut c.reinit.convergence_tol, self.reinit.convergence_tol);
        c.validate(grid)?;
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
