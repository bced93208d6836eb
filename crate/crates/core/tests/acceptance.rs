//! Acceptance criteria on the 100³ desk-scale grid.
//!
//! Every test prints one `PASS`/`FAIL` line per criterion, bypassing the test
//! harness capture so the lines show up in a plain `cargo test` log, and then
//! asserts. Optimizer runs shared between criteria are computed once.
//! The 150³ Schwartz D run is `#[ignore]`d; run it with `--ignored`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use tpms_core::constraint::{drive_with, newton_with_trace, ContinuationParams, NewtonParams};
use tpms_core::fieldfile::{decode, encode};
use tpms_core::initializers::{nodal_field, primitive_field, Family, NodalSpec, PrimitiveKind, PrimitiveSpec};
use tpms_core::mesh::extract_zero_set;
use tpms_core::metrics::{lagrange_multiplier, smoothed_delta, surface_area, volume_fraction};
use tpms_core::optimizer::{optimize, OptimizerConfig, RunRecord, RunStatus};
use tpms_core::reinit::{reinitialize, zero_crossings_x, ReinitParams};
use tpms_core::sweep::{run_sweep, SweepRow, SweepSpec};
use tpms_core::{PeriodicGrid, ScalarField, SmoothingParams};

const N: usize = 100;

fn verdict(id: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn grid(n: usize) -> PeriodicGrid {
    PeriodicGrid::cubic(n).unwrap()
}

/// Default configuration with a tighter area stopping tolerance. Near a
/// stationary surface one step lowers the area by about `β A var(∇·n + λ)`,
/// so stopping at `|ΔA| < 1e-6` leaves `stddev(∇·n) ≈ (1e-6 / (β A))^½ ≈ 0.16`
/// at 100³; `1e-7` brings that to about 0.05.
fn config(g: &PeriodicGrid) -> OptimizerConfig {
    let mut c = OptimizerConfig::default_for(g);
    c.area_tol = 1e-7;
    c
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn spread(row: &SweepRow) -> f64 {
    row.curvature_stddev / (2.0 * row.mean_curvature).abs().max(1.0)
}

fn sweep(family: Family, fractions: &[f64]) -> Vec<SweepRow> {
    let g = grid(N);
    let seed = nodal_field(&NodalSpec::leading(family), g);
    let spec = SweepSpec {
        family,
        fractions: fractions.to_vec(),
        grid_size: N,
    };
    run_sweep(&seed, &spec, &config(&g), |_, _| {}).unwrap()
}

fn row_at(rows: &[SweepRow], f: f64) -> &SweepRow {
    rows.iter().find(|r| (r.target - f).abs() < 1e-9).unwrap()
}

fn p_sweep() -> &'static [SweepRow] {
    static ROWS: OnceLock<Vec<SweepRow>> = OnceLock::new();
    ROWS.get_or_init(|| sweep(Family::P, &[0.35, 0.40, 0.45, 0.5, 0.55, 0.60, 0.65]))
}

fn g_runs() -> &'static [SweepRow] {
    static ROWS: OnceLock<Vec<SweepRow>> = OnceLock::new();
    ROWS.get_or_init(|| sweep(Family::G, &[0.3, 0.5, 0.7]))
}

fn primitive_run(kind: PrimitiveKind) -> RunRecord {
    let g = grid(N);
    let phi = primitive_field(&PrimitiveSpec::centered(kind, 0.25), g).unwrap();
    optimize(&phi, 0.5, &config(&g)).unwrap().1
}

fn cube_run() -> &'static RunRecord {
    static REC: OnceLock<RunRecord> = OnceLock::new();
    REC.get_or_init(|| primitive_run(PrimitiveKind::Cube))
}

fn channel_run() -> &'static RunRecord {
    static REC: OnceLock<RunRecord> = OnceLock::new();
    REC.get_or_init(|| primitive_run(PrimitiveKind::SquareChannel))
}

fn describe(row: &SweepRow) -> String {
    format!(
        "f={:.4} H={:+.4} A={:.5} spread={:.4} iters={} status={}",
        row.volume_fraction,
        row.mean_curvature,
        row.area,
        spread(row),
        row.iterations,
        row.status
    )
}

#[test]
fn criterion_01_schwarz_p() {
    let r = row_at(p_sweep(), 0.5);
    let ok = verdict(
        "criterion 1 (P at f=0.5: A = 2.34 ± 0.02, |H| <= 0.05)",
        r.converged() && (r.area - 2.34).abs() <= 0.02 && r.mean_curvature.abs() <= 0.05,
        describe(r),
    );
    assert!(ok);
}

#[test]
fn criterion_02_schoen_g() {
    let r = row_at(g_runs(), 0.5);
    let ok = verdict(
        "criterion 2 (G at f=0.5: A = 3.10 ± 2%, |H| <= 0.05)",
        r.converged() && rel(r.area, 3.10) <= 0.02 && r.mean_curvature.abs() <= 0.05,
        describe(r),
    );
    assert!(ok);
}

#[test]
#[ignore = "150³ run takes hours"]
fn criterion_03_schwarz_d() {
    let g = grid(150);
    let phi = nodal_field(&NodalSpec::leading(Family::D), g);
    let (_, rec) = optimize(&phi, 0.5, &config(&g)).unwrap();
    let detail = match rec.final_metrics {
        Some(m) => format!("A={:.5} H={:+.4} status={}", m.area, m.mean_curvature_avg, rec.status),
        None => format!("status={}", rec.status),
    };
    let ok = verdict(
        "criterion 3 (D at f=0.5 on 150³: A = 3.84 ± 3%)",
        rec.status == RunStatus::ConvergedArea && rec.final_metrics.is_some_and(|m| rel(m.area, 3.84) <= 0.03),
        detail,
    );
    assert!(ok);
}

#[test]
fn criterion_04_p_sweep() {
    // Reference H in the outward convention, i.e. -λ/2.
    let table = [
        (0.35, 0.77, 2.23),
        (0.40, 0.50, 2.30),
        (0.45, 0.24, 2.33),
        (0.55, -0.24, 2.33),
        (0.60, -0.49, 2.30),
        (0.65, -0.78, 2.23),
    ];
    let mut all = true;
    for (f, h_ref, a_ref) in table {
        let r = row_at(p_sweep(), f);
        let h_out = -r.mean_curvature;
        all &= verdict(
            &format!("criterion 4 (P at f={f}: outward H = {h_ref} ± 0.08, A = {a_ref} ± 2%)"),
            r.converged() && (h_out - h_ref).abs() <= 0.08 && rel(r.area, a_ref) <= 0.02,
            format!("outward H={h_out:+.4} {}", describe(r)),
        );
    }
    assert!(all);
}

#[test]
fn criterion_05_g_spot_checks() {
    let mut all = true;
    for (f, h_ref) in [(0.3, 1.22), (0.7, -1.22)] {
        let r = row_at(g_runs(), f);
        let h_out = -r.mean_curvature;
        all &= verdict(
            &format!("criterion 5 (G at f={f}: outward H = {h_ref} ± 8%, A = 2.86 ± 2%)"),
            r.converged() && rel(h_out, h_ref) <= 0.08 && rel(r.area, 2.86) <= 0.02,
            format!("outward H={h_out:+.4} {}", describe(r)),
        );
    }
    assert!(all);
}

fn record_detail(rec: &RunRecord) -> String {
    let iters = rec.rows.last().map_or(0, |r| r.iter);
    match rec.final_metrics {
        Some(m) => format!(
            "A={:.5} H={:+.4} stddev(div n)/|lambda|={:.4} iters={iters} status={}",
            m.area,
            m.mean_curvature_avg,
            m.curvature_stddev / m.lagrange_multiplier.abs(),
            rec.status
        ),
        None => {
            let last = rec.rows.last().map_or(f64::NAN, |r| r.area);
            format!("last recorded A={last:.5} iters={iters} status={}", rec.status)
        }
    }
}

#[test]
fn criterion_06_verification_shapes() {
    let r_sphere = (3.0 * 0.5 / (4.0 * PI)).cbrt();
    let a_sphere = 4.0 * PI * r_sphere * r_sphere;
    let a_cyl = 2.0 * PI * (0.5 / PI).sqrt();

    let cube = cube_run();
    let cube_ok = verdict(
        &format!("criterion 6a (cube -> sphere at f=0.5: A = {a_sphere:.4} ± 2%, stddev/|H| < 0.1)"),
        cube.status == RunStatus::ConvergedArea
            && cube.final_metrics.is_some_and(|m| {
                rel(m.area, a_sphere) <= 0.02 && m.curvature_stddev / m.lagrange_multiplier.abs() < 0.1
            }),
        record_detail(cube),
    );
    let chan = channel_run();
    let chan_ok = verdict(
        &format!("criterion 6b (square channel -> cylinder at f=0.5: A = {a_cyl:.4} ± 2%)"),
        chan.status == RunStatus::ConvergedArea && chan.final_metrics.is_some_and(|m| rel(m.area, a_cyl) <= 0.02),
        record_detail(chan),
    );
    assert!(cube_ok && chan_ok);
}

#[test]
fn criterion_07_constant_curvature() {
    let mut all = true;
    let rows = p_sweep()
        .iter()
        .map(|r| ("P", r))
        .chain(g_runs().iter().map(|r| ("G", r)));
    for (family, r) in rows {
        if r.converged() {
            let s = spread(r);
            all &= verdict(
                &format!(
                    "criterion 7 ({family} at f={}: stddev(div n)/max(1,|lambda|) < 0.15)",
                    r.target
                ),
                s < 0.15,
                format!("{s:.4}"),
            );
        }
    }
    for (name, rec) in [("cube", cube_run()), ("square channel", channel_run())] {
        match (rec.status == RunStatus::ConvergedArea, rec.curvature_spread()) {
            (true, Some(s)) => {
                all &= verdict(
                    &format!("criterion 7 ({name} at f=0.5: stddev(div n)/max(1,|lambda|) < 0.15)"),
                    s < 0.15,
                    format!("{s:.4}"),
                );
            }
            _ => {
                let mut out = std::io::stdout().lock();
                let _ = writeln!(
                    out,
                    "NOTE criterion 7: {name} run did not converge ({}); not a converged surface",
                    rec.status
                );
            }
        }
    }
    assert!(all);
}

#[test]
fn criterion_08_phase_symmetry() {
    let mut all = true;
    let pairs = [(p_sweep(), 0.35), (p_sweep(), 0.40), (p_sweep(), 0.45), (g_runs(), 0.3)];
    for (rows, f) in pairs {
        let (a, b) = (row_at(rows, f), row_at(rows, 1.0 - f));
        let dh = (a.mean_curvature + b.mean_curvature).abs();
        let da = rel(a.area, b.area);
        all &= verdict(
            &format!(
                "criterion 8 (f={f} vs {}: |H(f) + H(1-f)| <= 0.05, A within 0.5%)",
                1.0 - f
            ),
            a.converged() && b.converged() && dh <= 0.05 && da <= 0.005,
            format!("dH={dh:.5} dA/A={da:.2e}"),
        );
    }
    assert!(all);
}

fn mean_radius(phi: &ScalarField) -> f64 {
    let g = phi.grid();
    let h = g.spacing();
    let crossings = zero_crossings_x(phi);
    let sum: f64 = crossings
        .iter()
        .map(|&(idx, t)| {
            let (i, j, k) = g.unravel(idx);
            let x = g.coord(i, j, k);
            let d = [x[0] + t * h[0] - 0.5, x[1] - 0.5, x[2] - 0.5];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .sum();
    sum / crossings.len() as f64
}

#[test]
fn criterion_09_newton_oracle() {
    let g = grid(N);
    let dx = g.min_spacing();
    let s = SmoothingParams::default_for(&g);
    let radius = |f: f64| (3.0 * f / (4.0 * PI)).cbrt();
    let r0 = radius(0.065);
    let phi = ScalarField::from_fn(g, move |p| {
        let d = [p[0] - 0.5, p[1] - 0.5, p[2] - 0.5];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() - r0
    });
    let newton = NewtonParams::default_for(&g);
    let mut stages = Vec::new();
    drive_with(
        &phi,
        0.3,
        &ContinuationParams::default(),
        &newton,
        s,
        &ReinitParams::default_for(&g),
        |rep, field| stages.push((rep.target, mean_radius(field))),
    )
    .unwrap();
    let mut all = true;
    for &(f, r) in &stages {
        all &= verdict(
            &format!("criterion 9 (sphere stage f={f:.4}: radius within 2dx of analytic)"),
            (r - radius(f)).abs() < 2.0 * dx,
            format!("measured {r:.5} analytic {:.5} (2dx = {:.3})", radius(f), 2.0 * dx),
        );
    }
    all &= verdict(
        "criterion 9 (continuation from 0.065 to 0.3 in stages of at most 0.05)",
        stages.len() == 5 && stages.last().is_some_and(|&(f, _)| f == 0.3),
        format!("{} stages", stages.len()),
    );

    // Local quadratic convergence: e_{k+1} <= C e_k² once e_k is small.
    let (_, trace) = newton_with_trace(&phi, 0.115, &newton, s).unwrap();
    let e = &trace.residuals;
    let ratios: Vec<f64> = e
        .windows(2)
        .filter(|w| w[0] < 1e-3 && w[1] > 0.0)
        .map(|w| w[1] / (w[0] * w[0]))
        .collect();
    all &= verdict(
        "criterion 9 (Newton residuals contract quadratically: e_{k+1} / e_k^2 <= 1e3 for e_k < 1e-3)",
        !ratios.is_empty() && ratios.iter().all(|&c| c <= 1e3),
        format!(
            "residuals [{}], ratios {ratios:.1?}",
            e.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    );
    assert!(all);
}

#[test]
fn criterion_10_property_suites() {
    let start = Instant::now();
    let mut all = true;

    let sp = SmoothingParams::new(0.03).unwrap();
    let m = 200_000;
    let dphi = 4.0 * sp.epsilon / m as f64;
    let integral: f64 = (0..m)
        .map(|i| smoothed_delta(-2.0 * sp.epsilon + (i as f64 + 0.5) * dphi, sp) * dphi)
        .sum();
    all &= verdict(
        "criterion 10 (smoothed delta integrates to 1 within 1e-4)",
        (integral - 1.0).abs() < 1e-4,
        format!("{integral:.8}"),
    );

    let g = grid(64);
    let s = SmoothingParams::default_for(&g);
    let rp = ReinitParams::default_for(&g);
    let gy = reinitialize(&nodal_field(&NodalSpec::new(Family::G, 1.0, 0.3).unwrap(), g), &rp).unwrap();
    let neg = gy.scaled(-1.0);
    let df = (volume_fraction(&gy, s) + volume_fraction(&neg, s) - 1.0).abs();
    let da = (surface_area(&gy, s).unwrap() - surface_area(&neg, s).unwrap()).abs();
    let dl = (lagrange_multiplier(&gy, s).unwrap() + lagrange_multiplier(&neg, s).unwrap()).abs();
    all &= verdict(
        "criterion 10 (phase swap: f -> 1-f, A -> A, lambda -> -lambda within 1e-12)",
        df <= 1e-12 && da <= 1e-12 && dl <= 1e-12,
        format!("df={df:.1e} dA={da:.1e} dlambda={dl:.1e}"),
    );

    let p = reinitialize(&nodal_field(&NodalSpec::leading(Family::P), g), &rp).unwrap();
    let pp = reinitialize(&p, &rp).unwrap();
    let band = rp.band_width - 2.0 * g.max_spacing();
    let drift = p
        .values()
        .iter()
        .zip(pp.values())
        .filter(|(a, _)| a.abs() < band)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    all &= verdict(
        "criterion 10 (reinit idempotence within 1e-3 in the band)",
        drift <= 1e-3,
        format!("{drift:.2e}"),
    );

    let back = decode(&encode(&gy)).unwrap();
    let exact = back.grid() == gy.grid()
        && back
            .values()
            .iter()
            .zip(gy.values())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    all &= verdict(
        "criterion 10 (field file round trip is bit-exact)",
        exact,
        format!("{} values", gy.values().len()),
    );

    let g = grid(N);
    let s = SmoothingParams::default_for(&g);
    let sphere = ScalarField::from_fn(g, |p| {
        let d = [p[0] - 0.5, p[1] - 0.5, p[2] - 0.5];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() - 0.25
    });
    let mesh_area = extract_zero_set(&sphere).unwrap().area();
    let delta_area = surface_area(&sphere, s).unwrap();
    all &= verdict(
        "criterion 10 (mesh area agrees with delta-function area within 3% on the analytic sphere)",
        rel(mesh_area, delta_area) <= 0.03,
        format!("mesh {mesh_area:.5} delta {delta_area:.5} exact {:.5}", PI / 4.0),
    );

    let secs = start.elapsed().as_secs_f64();
    all &= verdict(
        "criterion 10 (property suites finish within 60 s)",
        secs < 60.0,
        format!("{secs:.1} s"),
    );
    assert!(all);
}
