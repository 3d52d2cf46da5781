use std::path::{Path, PathBuf};

use serde::Serialize;

use homog_core::darcy::{conservation_report, run as run_darcy, ConservationRow, LedgerRow, Trajectory};
use homog_core::fields::ScalarField;
use homog_core::geometry::{Boundary, StaggeredGrid};

use crate::commands::{cell::read_permeability, Context};
use crate::config::{DarcyConfig, DarcyDomain, DumpFormat};
use crate::{io, Check, CliError};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Cells per axis.
    #[arg(long)]
    pub n: Option<usize>,
    /// Final time.
    #[arg(long = "T")]
    pub t_end: Option<f64>,
    /// Time step (defaults to the grid spacing).
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    /// Permeability from a resistance.json.
    #[arg(long)]
    pub resistance: Option<String>,
    /// Dump every k-th stored frame; 0 disables dumps.
    #[arg(long)]
    pub dump_every: Option<usize>,
    #[arg(long, value_enum)]
    pub dump_format: Option<DumpFormat>,
}

pub fn resolve(args: &Args, cfg: &DarcyConfig, ctx: &Context) -> Result<DarcyConfig, CliError> {
    let mut c = cfg.clone();
    if let Some(n) = args.n {
        c.n = n;
    }
    if let Some(t) = args.t_end {
        c.t_end = t;
    }
    if args.dt.is_some() {
        c.dt = args.dt;
    }
    if args.resistance.is_some() {
        c.resistance = args.resistance.clone();
    }
    if let Some(k) = args.dump_every {
        c.dump_every = k;
    }
    if let Some(f) = args.dump_format {
        c.dump_format = f;
    }
    if let Some(t) = ctx.tol {
        c.options.tol = t;
    }
    Ok(c)
}

/// `run_report.json`.
#[derive(Debug, Serialize)]
struct RunReport {
    passed: bool,
    steps: usize,
    dt: f64,
    a: [[f64; 3]; 3],
    checks: Vec<Check>,
    failure: Option<homog_core::darcy::StepFailure>,
    first: Option<LedgerRow>,
    last: Option<LedgerRow>,
}

/// Shortest round-trip text, scientific outside `[1e-4, 1e9)`.
fn fmt(x: f64) -> String {
    if x == 0.0 || (1e-4..1e9).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn q_name(q: f64) -> String {
    if q.is_infinite() {
        "norm_linf".into()
    } else {
        format!("norm_l{q}")
    }
}

fn write_ledger(path: &Path, q_list: &[f64], rows: &[LedgerRow]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    let mut head: Vec<String> = ["step", "t", "mass", "l2"].map(String::from).to_vec();
    head.extend(q_list.iter().map(|q| q_name(*q)));
    head.extend(
        ["min", "max", "h1", "h2", "div_residual", "cfl", "pressure_iterations", "pressure_ratio", "picard_iterations"]
            .map(String::from),
    );
    w.write_record(&head)?;
    for r in rows {
        let mut rec = vec![r.step.to_string(), fmt(r.t), fmt(r.mass), fmt(r.l2)];
        rec.extend(r.lq.iter().map(|v| fmt(*v)));
        rec.extend([
            fmt(r.min),
            fmt(r.max),
            fmt(r.h1),
            fmt(r.h2),
            fmt(r.div_residual),
            fmt(r.cfl),
            r.pressure_iterations.to_string(),
            fmt(r.pressure_ratio),
            r.picard_iterations.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_conservation(path: &Path, q_list: &[f64], rows: &[ConservationRow]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    let mut head: Vec<String> = ["step", "t", "mass_drift"].map(String::from).to_vec();
    head.extend(q_list.iter().map(|q| format!("moment_drift_{}", q_name(*q))));
    head.extend(["min", "max", "h1", "h2"].map(String::from));
    w.write_record(&head)?;
    for r in rows {
        let mut rec = vec![r.step.to_string(), fmt(r.t), fmt(r.mass_drift)];
        rec.extend(r.moment_drift.iter().map(|v| fmt(*v)));
        rec.extend([fmt(r.min), fmt(r.max), fmt(r.h1), fmt(r.h2)]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_dumps(dir: &Path, traj: &Trajectory, every: usize, format: DumpFormat) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let grid = &traj.grid;
    let vtk = matches!(format, DumpFormat::Vtk | DumpFormat::Both);
    let raw = matches!(format, DumpFormat::Raw | DumpFormat::Both);
    for s in traj.states.iter().step_by(every) {
        let tag = format!("{:06}", s.step);
        if vtk {
            io::write_vtk_scalar(&dir.join(format!("rho_{tag}.vtk")), grid, "rho", &s.rho)?;
            io::write_vtk_scalar(&dir.join(format!("p_{tag}.vtk")), grid, "p", &s.p)?;
            io::write_vtk_vector(&dir.join(format!("u_{tag}.vtk")), grid, "u", &s.u)?;
        }
        if raw {
            io::write_raw(&dir.join(format!("rho_{tag}.raw")), grid, "rho", &[&s.rho.data])?;
            io::write_raw(&dir.join(format!("p_{tag}.raw")), grid, "p", &[&s.p.data])?;
            let c = homog_core::fields::cell_average(grid, &s.u);
            io::write_raw(&dir.join(format!("u_{tag}.raw")), grid, "u", &[&c[0], &c[1], &c[2]])?;
        }
    }
    Ok(())
}

fn density_from_file(path: &Path, grid: &StaggeredGrid) -> Result<ScalarField, CliError> {
    let (h, data) = io::read_raw(path)?;
    if h.dims != grid.dims() || h.components != 1 || data.len() != grid.n_cells() {
        return Err(CliError::Config(format!(
            "density file {} has dims {:?}×{}, grid needs {:?}×1",
            path.display(),
            h.dims,
            h.components,
            grid.dims()
        )));
    }
    Ok(ScalarField { dims: grid.dims(), data })
}

/// Invariant checks of a finished trajectory.
pub fn checks(traj: &Trajectory, c: &DarcyConfig, rho0_nonneg: bool) -> Vec<Check> {
    let cons = conservation_report(traj, &[]);
    let drift = cons.iter().map(|r| r.mass_drift.abs()).fold(0.0, f64::max);
    let ledger = &traj.ledger;
    let range = ledger.windows(2).all(|w| w[1].max <= w[0].max && w[1].min >= w[0].min);
    let nonneg = !rho0_nonneg || ledger.iter().all(|r| r.min >= 0.0);
    let decay = match (ledger.first(), ledger.last()) {
        (Some(a), Some(b)) if a.l2 > 0.0 => 1.0 - b.l2 / a.l2,
        _ => 0.0,
    };
    let div = ledger.iter().map(|r| r.div_residual).fold(0.0, f64::max);
    vec![
        Check::at_most("mass_drift", drift, c.mass_drift_max),
        Check::flag("range_non_expanding", range),
        Check::flag("non_negative", nonneg),
        Check::at_most("l2_decay", decay, c.l2_decay_max),
        Check::at_most("div_residual", div, 10.0 * c.options.tol),
    ]
}

pub fn run(args: &Args, cfg: &DarcyConfig, ctx: &Context) -> Result<bool, CliError> {
    let c = resolve(args, cfg, ctx)?;
    ctx.record(&c)?;
    if c.n < 2 {
        return Err(CliError::Config(format!("grid needs at least 2 cells per axis, got {}", c.n)));
    }
    let grid = match c.domain {
        DarcyDomain::Torus => StaggeredGrid::unit_torus(c.n),
        DarcyDomain::Box => StaggeredGrid::uniform([c.n; 3], [0.0; 3], [1.0; 3], Boundary::Wall),
    };
    let a = match &c.resistance {
        Some(p) => {
            ctx.input(PathBuf::from(p));
            read_permeability(Path::new(p))?
        }
        None => c.a,
    };
    let rho0 = match &c.density_file {
        Some(p) => {
            ctx.input(PathBuf::from(p));
            density_from_file(Path::new(p), &grid)?
        }
        None => c.density.sample(&grid)?,
    };
    let dt = c.dt.unwrap_or(1.0 / c.n as f64);
    let traj = run_darcy(&grid, &rho0, &c.force, a, c.t_end, dt, &c.options)?;
    write_ledger(&ctx.path("ledger.csv"), &traj.q_list, &traj.ledger)?;
    write_conservation(
        &ctx.path("conservation.csv"),
        &c.options.q_list,
        &conservation_report(&traj, &c.options.q_list),
    )?;
    if c.dump_every > 0 {
        write_dumps(&ctx.path("dumps"), &traj, c.dump_every, c.dump_format)?;
    }
    let cfl = traj.ledger.iter().map(|r| r.cfl).fold(0.0, f64::max);
    if cfl > 0.5 * c.options.cfl_max {
        log::warn!("CFL number {cfl:.3} is above half the cap {}", c.options.cfl_max);
    }
    let checks = checks(&traj, &c, rho0.min() >= 0.0);
    let passed = traj.failure.is_none() && checks.iter().all(|k| k.pass);
    for k in &checks {
        println!(
            "{:<20} {:>12.4e} (limit {:.1e})  {}",
            k.name,
            k.value,
            k.threshold,
            if k.pass { "pass" } else { "FAIL" }
        );
    }
    let report = RunReport {
        passed,
        steps: traj.ledger.len().saturating_sub(1),
        dt,
        a,
        checks,
        failure: traj.failure.clone(),
        first: traj.ledger.first().cloned(),
        last: traj.ledger.last().cloned(),
    };
    io::write_json(&ctx.path("run_report.json"), &report)?;
    if let Some(f) = &traj.failure {
        let msg = format!("run stopped at step {} (t = {}): {}", f.step, f.t, f.message);
        return Err(if f.solver { CliError::Solver(msg) } else { CliError::Config(msg) });
    }
    Ok(passed)
}
