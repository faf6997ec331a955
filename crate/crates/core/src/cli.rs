//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 solver failure, 3 condition
//! failure in strict mode or a failed verify property, 4/5/6 config parse,
//! schema and range errors. A malformed command line also exits with 4.

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use log::{error, info, warn};
use thiserror::Error;

use crate::ambient::{schwarzschild_sphere_mean_curvature, ExtrinsicKind, MetricKind};
use crate::config::{parse_config, ConfigError, RunConfig};
use crate::geometry::{compute_geometry, summarize, GraphSurface};
use crate::io::{self, IoError, SurfaceFile};
use crate::momentum::{center_drift_series, recover_momentum, MomentumError};
use crate::solver::{
    assemble_linearization, continuation, foliate, gap_reference, newton_solve, quadratic_form, spectral_gap,
    FoliationResult, SolveResult, SolverError,
};
use crate::sphere::{coeff_index, SphericalGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CHECK: i32 = 3;
/// Malformed command line; shares the config-parse code.
pub const EXIT_USAGE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "pmcfol", version, about = "Foliations by surfaces of constant H ± P")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `task.output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Treat condition-flag failures as errors.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for a single surface at the first `h`.
    Solve(Common),
    /// Sweep through the `h` list and check nesting.
    Foliate(Common),
    /// Foliate, then recover the linear momentum from the center drift.
    Momentum(Common),
    /// Spectral gap of the linearized operator for every `h`.
    Gap(Common),
    /// Run the property suite for the configured family.
    Verify(Common),
}

#[derive(Debug, Error)]
enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Momentum(#[from] MomentumError),
    #[error("{0}")]
    Check(String),
}

impl RunError {
    fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(e) => e.exit_code(),
            RunError::Io(_) => EXIT_IO,
            RunError::Solver(_) | RunError::Momentum(_) => EXIT_SOLVER,
            RunError::Check(_) => EXIT_CHECK,
        }
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Run {
    cfg: RunConfig,
    grid: SphericalGrid,
    out: PathBuf,
    strict: bool,
}

fn prepare(common: &Common) -> Result<Run, RunError> {
    let text = fs::read_to_string(&common.config).map_err(|source| IoError::Io {
        path: common.config.display().to_string(),
        source,
    })?;
    let cfg = parse_config(&text)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.task.output_dir.clone());
    io::write_text(&out.join("config.toml"), &text)?;
    let grid = SphericalGrid::new(cfg.degree).map_err(|e| SolverError::Invalid(e.to_string()))?;
    let strict = common.strict || cfg.strict;
    Ok(Run { cfg, grid, out, strict })
}

fn dispatch(cmd: &Command) -> Result<(), RunError> {
    match cmd {
        Command::Solve(c) => cmd_solve(&prepare(c)?),
        Command::Foliate(c) => cmd_foliate(&prepare(c)?).map(|_| ()),
        Command::Momentum(c) => cmd_momentum(&prepare(c)?),
        Command::Gap(c) => cmd_gap(&prepare(c)?),
        Command::Verify(c) => cmd_verify(&prepare(c)?),
    }
}

/// Path from the centered sphere at `τ = 0` to `(h, τ)`.
fn solve_at(run: &Run, h: f64) -> Result<SolveResult, SolverError> {
    let fam = &run.cfg.family;
    let curve = match &run.cfg.task.curve {
        Some(c) => c.clone(),
        None if fam.tau > 0.0 => vec![(h, 0.0), (h, fam.tau)],
        None => vec![(h, 0.0)],
    };
    let mut path = continuation(&run.grid, fam, &curve, &run.cfg.settings)?;
    Ok(path.pop().expect("curve is nonempty"))
}

fn check_flags(run: &Run, members: &[SolveResult]) -> Result<(), RunError> {
    let failing: Vec<String> = members
        .iter()
        .filter(|m| !m.summary.flags_c.all())
        .map(|m| format!("{:e}", m.h))
        .collect();
    if failing.is_empty() {
        return Ok(());
    }
    let msg = format!("condition flags fail at h = {}", failing.join(", "));
    if run.strict {
        Err(RunError::Check(msg))
    } else {
        warn!("{msg}");
        Ok(())
    }
}

fn write_surfaces(run: &Run, members: &[SolveResult]) -> Result<(), RunError> {
    for (k, m) in members.iter().enumerate() {
        let path = run.out.join(format!("surface_{k:03}.txt"));
        SurfaceFile::from_result(m, &run.cfg.family, run.cfg.degree).write(&path)?;
    }
    Ok(())
}

fn cmd_solve(run: &Run) -> Result<(), RunError> {
    let h = run.cfg.task.h[0];
    let r = solve_at(run, h)?;
    info!(
        "solved h={h:e}: R_e={:.6} m_H={:.10} in {} iterations",
        r.summary.radius_e, r.summary.hawking_mass, r.iterations
    );
    SurfaceFile::from_result(&r, &run.cfg.family, run.cfg.degree).write(&run.out.join("surface.txt"))?;
    let members = [r];
    io::write_text(&run.out.join("summary.csv"), &io::foliation_csv(&members))?;
    check_flags(run, &members)
}

fn run_foliation(run: &Run) -> Result<FoliationResult, RunError> {
    if run.cfg.task.curve.is_some() {
        warn!("task.curve is ignored by foliation runs");
    }
    Ok(foliate(&run.grid, &run.cfg.family, &run.cfg.task.h, &run.cfg.settings)?)
}

fn cmd_foliate(run: &Run) -> Result<FoliationResult, RunError> {
    let fol = run_foliation(run)?;
    write_foliation(run, &fol)?;
    check_flags(run, &fol.members)?;
    let broken: Vec<String> = fol
        .pairs
        .iter()
        .filter(|p| !p.nested() || !p.lapse_sign_definite())
        .map(|p| format!("({:e}, {:e})", p.h_inner, p.h_outer))
        .collect();
    if !broken.is_empty() && run.strict {
        return Err(RunError::Check(format!("leaves not nested: {}", broken.join(", "))));
    }
    Ok(fol)
}

fn write_foliation(run: &Run, fol: &FoliationResult) -> Result<(), RunError> {
    write_surfaces(run, &fol.members)?;
    io::write_text(&run.out.join("foliation.csv"), &io::foliation_csv(&fol.members))?;
    io::write_text(&run.out.join("pairs.csv"), &io::pairs_csv(&fol.pairs))?;
    Ok(())
}

fn cmd_momentum(run: &Run) -> Result<(), RunError> {
    let fol = run_foliation(run)?;
    write_foliation(run, &fol)?;
    let series = center_drift_series(&fol)?;
    io::write_text(&run.out.join("drift.csv"), &io::drift_csv(&series))?;
    let est = recover_momentum(&series, run.cfg.family.effective_mass(), run.cfg.task.form)?;
    info!(
        "tau_hat={:.6} p_hat=({:.6}, {:.6}, {:.6})",
        est.tau, est.momentum[0], est.momentum[1], est.momentum[2]
    );
    io::write_text(&run.out.join("momentum.json"), &io::momentum_report(&est, &fol))?;
    check_flags(run, &fol.members)
}

fn cmd_gap(run: &Run) -> Result<(), RunError> {
    let fol = run_foliation(run)?;
    let m = run.cfg.family.effective_mass();
    let mut rows = Vec::with_capacity(fol.members.len());
    for member in &fol.members {
        let op = assemble_linearization(&run.grid, &member.geometry);
        let mu = spectral_gap(&run.grid, &op, &member.geometry)?;
        let r = member.summary.radius_e;
        rows.push((r, mu, gap_reference(m, r)));
    }
    io::write_text(&run.out.join("gap.csv"), &io::gap_csv(&rows))?;
    check_flags(run, &fol.members)
}

/// One verify property.
pub struct Property {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn prop(name: &'static str, err: f64, tol: f64) -> Property {
    Property {
        name,
        passed: err <= tol,
        detail: format!("err={err:.2e} tol={tol:.0e}"),
    }
}

fn sup_dev(values: &[f64], target: f64) -> f64 {
    values.iter().fold(0.0, |a, v| a.max((v - target).abs()))
}

/// Property suite for the configured family, on the configured grid.
pub fn verify_suite(cfg: &RunConfig, grid: &SphericalGrid) -> Result<Vec<Property>, SolverError> {
    let fam = &cfg.family;
    let mut out = Vec::new();

    let mut worst: f64 = 0.0;
    for (l, m) in [(0usize, 0i64), (1, -1), (3, 2), (grid.lmax(), grid.lmax() as i64)] {
        let y = grid.harmonic(l, m);
        let norm = grid.integrate(&y.iter().map(|v| v * v).collect::<Vec<_>>())?;
        worst = worst.max((norm - 1.0).abs());
        let back = grid.analysis(&y)?;
        let target = coeff_index(l, m);
        for (i, c) in back.iter().enumerate() {
            worst = worst.max((c - f64::from(u8::from(i == target))).abs());
        }
    }
    out.push(prop("harmonic orthonormality and round trip", worst, 1e-12));

    let flat = fam.metric_kind == MetricKind::Euclidean && fam.k_kind == ExtrinsicKind::Zero;
    let centered = fam.k_kind == ExtrinsicKind::Zero
        && (fam.metric_kind != MetricKind::SchwarzschildPlusPerturbation || fam.perturbation.amplitude == 0.0);

    if flat {
        let geom = compute_geometry(grid, &GraphSurface::sphere(grid, 1.0), fam)?;
        out.push(prop("unit sphere H = 2", sup_dev(&geom.mean_curvature(), 2.0), 1e-10));
        out.push(prop("unit sphere G = 1", sup_dev(&geom.gauss_curvature(), 1.0), 1e-10));
        out.push(prop("unit sphere P = 0", sup_dev(&geom.p_values(), 0.0), 1e-12));
        let s = summarize(grid, &geom, fam)?;
        out.push(prop("unit sphere m_H = 0", s.hawking_mass.abs(), 1e-10));
        out.push(prop("unit sphere convexity margin = 2", (s.convexity_margin - 2.0).abs(), 1e-10));
        let op = assemble_linearization(grid, &geom);
        let mut one = vec![0.0; grid.n_coeffs()];
        one[0] = (4.0 * PI).sqrt();
        out.push(prop("L 1 = -2", sup_dev(&op.apply_nodal(grid, &one)?, -2.0), 1e-10));
        let mut y1 = vec![0.0; grid.n_coeffs()];
        let mut k1: f64 = 0.0;
        for i in 1..4 {
            y1.iter_mut().for_each(|c| *c = 0.0);
            y1[i] = 1.0;
            k1 = k1.max(sup_dev(&op.apply_nodal(grid, &y1)?, 0.0));
        }
        out.push(prop("L Y_1m = 0", k1, 1e-9));
        let (d, q) = quadratic_form(grid, &geom, &op, &one)?;
        out.push(prop("quadratic form of 1 = -8 pi", (d + 8.0 * PI).abs().max((q + 8.0 * PI).abs()), 1e-10));
        let mu = spectral_gap(grid, &op, &geom)?;
        out.push(prop("spectral gap = 0", mu.abs(), 1e-8));
        let r = newton_solve(grid, &GraphSurface::sphere(grid, 9.0), fam, 0.2, &cfg.settings)?;
        let u = r.surface.values(grid)?;
        out.push(prop("newton h = 0.2 gives u = 10", sup_dev(&u, 10.0), 1e-9));
    } else if centered {
        let m = fam.effective_mass();
        let radius = 20.0 * m.max(0.05);
        let h = schwarzschild_sphere_mean_curvature(m, radius);
        let mut settings = cfg.settings.clone();
        settings.tolerance = settings.tolerance.min(1e-11);
        let r = newton_solve(grid, &GraphSurface::sphere(grid, 0.95 * radius), fam, h, &settings)?;
        let u = r.surface.values(grid)?;
        out.push(prop("centered sphere is recovered", sup_dev(&u, radius) / radius, 1e-8));
        out.push(prop("Hawking mass equals m", (r.summary.hawking_mass - m).abs(), 1e-8));
        out.push(prop("center at origin", r.summary.center_e.norm() / radius, 1e-8));
    }

    let h = cfg.task.h[0];
    let mut path = match &cfg.task.curve {
        Some(c) => continuation(grid, fam, c, &cfg.settings)?,
        None if fam.tau > 0.0 => continuation(grid, fam, &[(h, 0.0), (h, fam.tau)], &cfg.settings)?,
        None => continuation(grid, fam, &[(h, 0.0)], &cfg.settings)?,
    };
    let r = path.pop().expect("nonempty");
    out.push(prop("configured solve converges", r.residual(), cfg.settings.tolerance));
    let convex = r.geometry.nodes.iter().map(|n| (n.a_sq() - 4.0 * n.det_shape()).max(0.0)).fold(0.0, f64::max);
    out.push(prop("configured solve is convex", convex, 0.0));
    let text = SurfaceFile::from_result(&r, fam, cfg.degree).to_text();
    let round = SurfaceFile::parse(&text).map(|f| f.to_text() == text).unwrap_or(false);
    out.push(Property {
        name: "surface file round trip",
        passed: round,
        detail: String::new(),
    });
    Ok(out)
}

fn cmd_verify(run: &Run) -> Result<(), RunError> {
    let props = verify_suite(&run.cfg, &run.grid)?;
    let mut report = String::new();
    for p in &props {
        let line = format!("{} {} {}", if p.passed { "PASS" } else { "FAIL" }, p.name, p.detail);
        println!("{}", line.trim_end());
        report.push_str(line.trim_end());
        report.push('\n');
    }
    io::write_text(&run.out.join("verify.txt"), &report)?;
    let failed = props.iter().filter(|p| !p.passed).count();
    if failed > 0 {
        return Err(RunError::Check(format!("{failed} of {} properties failed", props.len())));
    }
    Ok(())
}
