//! `tpms`: generate, optimize, measure and mesh level-set fields of triply
//! periodic surfaces.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tpms_core::fieldfile::{read_field, write_field};
use tpms_core::initializers::{nodal_field, primitive_field, Family, NodalSpec, PrimitiveKind, PrimitiveSpec};
use tpms_core::mesh::extract_zero_set;
use tpms_core::optimizer::{optimize_with, RunStatus};
use tpms_core::reinit::{reinitialize, ReinitParams};
use tpms_core::sweep::{rows_to_csv, run_sweep, SweepSpec};
use tpms_core::{Error, PeriodicGrid, ScalarField, SmoothingParams, SurfaceMetrics};

use crate::config::{ConfigFile, Overrides};

#[derive(Parser)]
#[command(
    name = "tpms",
    version,
    about = "Area minimization of triply periodic surfaces at fixed volume fraction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and reinitialize a starting field.
    Init(InitArgs),
    /// Minimize area at a target volume fraction.
    Optimize(OptimizeArgs),
    /// Print area, volume fraction and curvature of a field.
    Measure(MeasureArgs),
    /// Triangulate the zero level set (OBJ, or PLY by extension).
    Mesh(MeshArgs),
    /// Optimize a nodal family over several volume fractions.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ShapeArgs {
    /// Nodal approximation: P, D or G.
    #[arg(long, value_name = "FAMILY")]
    nodal: Option<Family>,
    /// Nodal term weights `w1,w2`.
    #[arg(long, value_name = "W1,W2", requires = "nodal")]
    weights: Option<String>,
    /// Sphere of the given radius.
    #[arg(long, value_name = "R")]
    sphere: Option<f64>,
    /// Cube of the given half-edge.
    #[arg(long, value_name = "A")]
    cube: Option<f64>,
    /// Square channel along z with the given half-width.
    #[arg(long, value_name = "A")]
    channel: Option<f64>,
    /// Three orthogonal circular channels of the given radius.
    #[arg(long, value_name = "R")]
    channels: Option<f64>,
    /// Any of the above as `kind[:size]`, e.g. `G`, `sphere:0.25`, `cube:0.25`.
    #[arg(long, value_name = "SPEC")]
    seed_shape: Option<String>,
}

#[derive(Args)]
struct InitArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Cells per axis.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value = "field.lsf")]
    out: PathBuf,
    #[arg(long)]
    epsilon_mult: Option<f64>,
    /// Write the raw generated field without reinitializing it.
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct TuningArgs {
    /// TOML file with `OptimizerConfig` keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tol_area: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epsilon_mult: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

impl TuningArgs {
    fn resolve(&self, grid: &PeriodicGrid) -> Result<tpms_core::optimizer::OptimizerConfig> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        file.resolve(
            grid,
            &Overrides {
                beta: self.beta,
                area_tol: self.tol_area,
                epsilon_mult: self.epsilon_mult,
                max_iters: self.max_iters,
            },
        )
    }
}

#[derive(Args)]
struct OptimizeArgs {
    /// Input field file.
    input: PathBuf,
    /// Target volume fraction.
    #[arg(long)]
    f: f64,
    /// Output field file; defaults to `<input>.opt.lsf`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-iteration record.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Save the field every N iterations next to the output.
    #[arg(long, value_name = "N")]
    checkpoint_every: Option<usize>,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Suppress progress lines on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct MeasureArgs {
    input: PathBuf,
    /// Reinitialize before measuring.
    #[arg(long)]
    reinit: bool,
    #[arg(long)]
    epsilon_mult: Option<f64>,
}

#[derive(Args)]
struct MeshArgs {
    input: PathBuf,
    #[arg(long, default_value = "surface.obj")]
    out: PathBuf,
    #[arg(long)]
    epsilon_mult: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Nodal family to start from.
    #[arg(long)]
    nodal: Family,
    #[arg(long, value_name = "W1,W2")]
    weights: Option<String>,
    /// Comma-separated target fractions.
    #[arg(long, value_delimiter = ',', required = true)]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Start from this field instead of the nodal approximation.
    #[arg(long)]
    seed: Option<PathBuf>,
    /// `f,H,A` table.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Directory for the converged fields.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: TuningArgs,
}

/// Marks failures of the numerics rather than of the input.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct NumericalFailure(String);

fn parse_weights(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts[..] else {
        bail!("weights must be two comma-separated numbers, got '{s}'");
    };
    Ok((a.parse().context("first weight")?, b.parse().context("second weight")?))
}

enum Shape {
    Nodal(NodalSpec),
    Primitive(PrimitiveSpec),
}

impl Shape {
    fn from_args(a: &ShapeArgs) -> Result<Self> {
        let mut picked = Vec::new();
        if let Some(f) = a.nodal {
            picked.push(Shape::Nodal(nodal_spec(f, a.weights.as_deref())?));
        }
        for (kind, size) in [
            (PrimitiveKind::Sphere, a.sphere),
            (PrimitiveKind::Cube, a.cube),
            (PrimitiveKind::SquareChannel, a.channel),
            (PrimitiveKind::CircularChannels, a.channels),
        ] {
            if let Some(s) = size {
                picked.push(Shape::Primitive(PrimitiveSpec::centered(kind, s)));
            }
        }
        if let Some(spec) = &a.seed_shape {
            picked.push(Self::parse(spec, a.weights.as_deref())?);
        }
        match picked.len() {
            1 => Ok(picked.pop().unwrap()),
            0 => bail!("no shape given (use --nodal, --sphere, --cube, --channel, --channels or --seed-shape)"),
            _ => bail!("give exactly one shape"),
        }
    }

    fn parse(spec: &str, weights: Option<&str>) -> Result<Self> {
        let (kind, size) = match spec.split_once(':') {
            Some((k, s)) => (
                k,
                Some(s.parse::<f64>().with_context(|| format!("shape size in '{spec}'"))?),
            ),
            None => (spec, None),
        };
        if let Ok(f) = kind.parse::<Family>() {
            if size.is_some() {
                bail!("nodal shapes take no size");
            }
            return Ok(Shape::Nodal(nodal_spec(f, weights)?));
        }
        let kind: PrimitiveKind = kind.parse()?;
        let size = size.ok_or_else(|| anyhow!("primitive '{spec}' needs a size, e.g. sphere:0.25"))?;
        Ok(Shape::Primitive(PrimitiveSpec::centered(kind, size)))
    }

    fn field(&self, grid: PeriodicGrid) -> Result<ScalarField> {
        Ok(match self {
            Shape::Nodal(s) => nodal_field(s, grid),
            Shape::Primitive(s) => primitive_field(s, grid)?,
        })
    }
}

fn nodal_spec(family: Family, weights: Option<&str>) -> Result<NodalSpec> {
    Ok(match weights {
        Some(w) => {
            let (a, b) = parse_weights(w)?;
            NodalSpec::new(family, a, b)?
        }
        None => NodalSpec::leading(family),
    })
}

fn smoothing(grid: &PeriodicGrid, mult: Option<f64>) -> Result<SmoothingParams> {
    Ok(match mult {
        Some(m) => SmoothingParams::for_grid(grid, m)?,
        None => SmoothingParams::default_for(grid),
    })
}

fn print_metrics(m: &SurfaceMetrics) {
    println!("f={:.6}", m.volume_fraction);
    println!("A={:.6}", m.area);
    println!("lambda={:.6}", m.lagrange_multiplier);
    println!("H={:.6}", m.mean_curvature_avg);
    println!("curvature_stddev={:.6}", m.curvature_stddev);
}

fn cmd_init(a: &InitArgs) -> Result<()> {
    let grid = PeriodicGrid::cubic(a.n)?;
    let shape = Shape::from_args(&a.shape)?;
    let mut field = shape.field(grid)?;
    if !a.raw {
        field = reinitialize(&field, &ReinitParams::default_for(&grid))?;
    }
    write_field(&a.out, &field)?;
    let s = smoothing(&grid, a.epsilon_mult)?;
    let m = SurfaceMetrics::evaluate_unchecked(&field, s)?;
    println!("f={:.6}", m.volume_fraction);
    println!("A={:.6}", m.area);
    Ok(())
}

fn checkpoint_path(out: &Path, iter: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("field");
    out.with_file_name(format!("{stem}.{iter:06}.lsf"))
}

fn cmd_optimize(a: &OptimizeArgs) -> Result<()> {
    let field = read_field(&a.input)?;
    let cfg = a.tuning.resolve(field.grid())?;
    let out = a.out.clone().unwrap_or_else(|| a.input.with_extension("opt.lsf"));
    let mut ckpt_err = None;
    let (result, record) = optimize_with(&field, a.f, &cfg, |row, phi| {
        if !a.quiet && row.iter % 100 == 0 {
            eprintln!(
                "iter {:>6}  A={:.8}  f={:.6}  lambda={:+.5}  dA={:+.3e}",
                row.iter, row.area, row.volume_fraction, row.lambda, row.delta_area
            );
        }
        if let Some(n) = a.checkpoint_every {
            if n > 0 && row.iter > 0 && row.iter % n == 0 {
                if let Err(e) = write_field(checkpoint_path(&out, row.iter), phi) {
                    ckpt_err.get_or_insert(e);
                }
            }
        }
    })?;
    if let Some(e) = ckpt_err {
        return Err(e).context("writing checkpoint");
    }
    if let Some(csv) = &a.csv {
        std::fs::write(csv, record.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    }
    if let RunStatus::Failed(reason) = &record.status {
        return Err(NumericalFailure(reason.clone()).into());
    }
    write_field(&out, &result)?;
    let m = record
        .final_metrics
        .ok_or_else(|| NumericalFailure("final field could not be measured".into()))?;
    eprintln!(
        "status: {}  iterations: {}  curvature spread: {:.4}",
        record.status,
        record.rows.last().map_or(0, |r| r.iter),
        record.curvature_spread().unwrap_or(f64::NAN)
    );
    println!("f,H,A");
    println!("{:.6},{:.6},{:.6}", m.volume_fraction, m.mean_curvature_avg, m.area);
    Ok(())
}

fn cmd_measure(a: &MeasureArgs) -> Result<()> {
    let mut field = read_field(&a.input)?;
    let grid = *field.grid();
    if a.reinit {
        field = reinitialize(&field, &ReinitParams::default_for(&grid))?;
    }
    let s = smoothing(&grid, a.epsilon_mult)?;
    let m = match SurfaceMetrics::evaluate(&field, s) {
        Ok(m) => m,
        Err(e @ Error::DistortedField { .. }) => {
            eprintln!("warning: {e}");
            SurfaceMetrics::evaluate_unchecked(&field, s)?
        }
        Err(e) => return Err(e.into()),
    };
    print_metrics(&m);
    Ok(())
}

fn cmd_mesh(a: &MeshArgs) -> Result<()> {
    let field = read_field(&a.input)?;
    let mesh = extract_zero_set(&field)?;
    mesh.write(&a.out)?;
    let s = smoothing(field.grid(), a.epsilon_mult)?;
    println!("vertices={}", mesh.vertices.len());
    println!("triangles={}", mesh.triangles.len());
    println!("mesh_area={:.6}", mesh.area());
    if let Ok(area) = tpms_core::metrics::surface_area(&field, s) {
        println!("delta_area={area:.6}");
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let spec = SweepSpec {
        family: a.nodal,
        fractions: a.fractions.clone(),
        grid_size: a.n,
    };
    let seed = match &a.seed {
        Some(p) => read_field(p)?,
        None => nodal_field(&nodal_spec(a.nodal, a.weights.as_deref())?, PeriodicGrid::cubic(a.n)?),
    };
    let cfg = a.tuning.resolve(seed.grid())?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    println!("f,H,A,status");
    let mut save_err = None;
    let rows = run_sweep(&seed, &spec, &cfg, |row, field| {
        println!("{}", row.to_csv());
        if let Some(dir) = &a.out {
            let path = dir.join(format!("{}_{:.4}.lsf", spec.family, row.target));
            if let Err(e) = write_field(path, field) {
                save_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = save_err {
        return Err(e).context("writing sweep field");
    }
    if let Some(csv) = &a.csv {
        std::fs::write(csv, rows_to_csv(&rows)).with_context(|| format!("writing {}", csv.display()))?;
    }
    let failed = rows.iter().filter(|r| matches!(r.status, RunStatus::Failed(_))).count();
    if failed > 0 {
        return Err(NumericalFailure(format!("{failed} of {} sweep runs failed", rows.len())).into());
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NumericalFailure>().is_some() {
        return 3;
    }
    match err.downcast_ref::<Error>() {
        Some(
            Error::DistortedField { .. }
            | Error::EmptySurface
            | Error::DerivativeVanished(_)
            | Error::NoConvergence { .. }
            | Error::Stage { .. },
        ) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Init(a) => cmd_init(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Measure(a) => cmd_measure(a),
        Command::Mesh(a) => cmd_mesh(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
