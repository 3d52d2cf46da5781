use serde::Serialize;

use homog_core::cell_problem::{extrapolate_m0, ResistanceMatrix};

use crate::commands::{obstacle_override, Context};
use crate::config::CellConfig;
use crate::{io, CliError};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Obstacle: ball:<r>, cube:<half-width> or none.
    #[arg(long)]
    pub obstacle: Option<String>,
    /// Truncation radii, comma separated.
    #[arg(long = "R", value_delimiter = ',')]
    pub r: Option<Vec<f64>>,
    /// Cells per axis: one value or one per radius.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub mu: Option<f64>,
}

/// `resistance.json`.
#[derive(Debug, Serialize)]
struct ResistanceFile<'a> {
    obstacle: &'a homog_core::geometry::Obstacle,
    #[serde(flatten)]
    matrix: &'a ResistanceMatrix,
}

pub fn resolve(args: &Args, cfg: &CellConfig, ctx: &Context) -> Result<CellConfig, CliError> {
    let mut c = cfg.clone();
    obstacle_override(&args.obstacle, &mut c.obstacle)?;
    if let Some(r) = &args.r {
        c.radii = r.clone();
    }
    if let Some(n) = &args.n {
        c.n = n.clone();
    }
    if let Some(mu) = args.mu {
        c.mu = mu;
    }
    if let Some(t) = ctx.tol {
        c.options.stokes.tol = t;
    }
    Ok(c)
}

pub fn run(args: &Args, cfg: &CellConfig, ctx: &Context) -> Result<bool, CliError> {
    let c = resolve(args, cfg, ctx)?;
    ctx.record(&c)?;
    c.obstacle.validate()?;
    if !(c.mu > 0.0) {
        return Err(CliError::Config(format!("viscosity {} must be positive", c.mu)));
    }
    let m = extrapolate_m0(&c.obstacle, &c.radii, &c.n, c.mu, &c.options)?;
    io::write_json(&ctx.path("resistance.json"), &ResistanceFile { obstacle: &c.obstacle, matrix: &m })?;
    println!("M0 =");
    for row in &m.m0 {
        println!("  {:>12.6} {:>12.6} {:>12.6}", row[0], row[1], row[2]);
    }
    println!("A = (mu M0)^-1 =");
    for row in &m.a {
        println!("  {:>12.6} {:>12.6} {:>12.6}", row[0], row[1], row[2]);
    }
    println!("extrapolation residual {:.3e}, asymmetry {:.3e}", m.provenance.extrapolation_residual, m.asymmetry);
    Ok(true)
}

/// Reads the `a` matrix of a `resistance.json`.
pub fn read_permeability(path: &std::path::Path) -> Result<[[f64; 3]; 3], CliError> {
    #[derive(serde::Deserialize)]
    struct OnlyA {
        a: [[f64; 3]; 3],
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read resistance file {}: {e}", path.display())))?;
    let r: OnlyA = serde_json::from_str(&text)?;
    Ok(r.a)
}
