use homog_core::cell_problem::solve_cell;
use homog_core::corrector::{parse_p, verify_corrector_estimates};
use homog_core::geometry::PerforationConfig;
use homog_core::Error;

use crate::commands::{named_rate, obstacle_override, print_fit, Context};
use crate::config::CorrectorConfig;
use crate::{io, CliError, RateReportFile};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub obstacle: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// ε values, comma separated.
    #[arg(long = "eps", value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// Integrability exponents, e.g. 2,inf.
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<String>>,
    /// Half-width applied to every slope band.
    #[arg(long)]
    pub band: Option<f64>,
    /// Truncation radius of the cell solve.
    #[arg(long)]
    pub cell_r: Option<f64>,
    #[arg(long)]
    pub cell_n: Option<usize>,
}

pub fn resolve(args: &Args, cfg: &CorrectorConfig, ctx: &Context) -> Result<CorrectorConfig, CliError> {
    let mut c = cfg.clone();
    obstacle_override(&args.obstacle, &mut c.obstacle)?;
    if let Some(a) = args.alpha {
        c.alpha = a;
    }
    if let Some(e) = &args.epsilons {
        c.epsilons = e.clone();
    }
    if let Some(p) = &args.p {
        c.p = p.clone();
    }
    if args.band.is_some() {
        c.band = args.band;
    }
    if let Some(r) = args.cell_r {
        c.cell_r = r;
    }
    if let Some(n) = args.cell_n {
        c.cell_n = n;
    }
    if let Some(t) = ctx.tol {
        c.cell_options.stokes.tol = t;
        c.options.stokes.tol = t;
    }
    Ok(c)
}

pub fn run(args: &Args, cfg: &CorrectorConfig, ctx: &Context) -> Result<bool, CliError> {
    let c = resolve(args, cfg, ctx)?;
    ctx.record(&c)?;
    if c.epsilons.len() < 3 {
        return Err(Error::TooFewPoints(c.epsilons.len()).into());
    }
    if let Some(b) = c.band {
        if !(b >= 0.0) {
            return Err(CliError::Config(format!("band half-width {b} must be ≥ 0")));
        }
    }
    let p_list = c.p.iter().map(|s| parse_p(s)).collect::<Result<Vec<_>, _>>()?;
    let configs: Vec<PerforationConfig> =
        c.epsilons.iter().map(|&e| PerforationConfig::torus(e, c.alpha, c.obstacle.clone())).collect();
    for pc in &configs {
        pc.validate()?;
    }
    let cell = solve_cell(&c.obstacle, c.cell_r, c.cell_n, &c.cell_options)?;
    let rates = verify_corrector_estimates(&configs, &cell, &p_list, &c.options, c.band)?;
    io::write_csv(&ctx.path("corrector_rates.csv"), &rates.rows)?;
    let fits: Vec<_> = rates.fits.iter().map(|f| named_rate(&format!("{}_L{}", f.norm_kind, f.p), &f.fit)).collect();
    for f in &fits {
        print_fit(&f.name, &f.report);
    }
    let passed = rates.passed();
    println!("largest corrector divergence residual {:.3e}", rates.div_residual);
    let report = RateReportFile { command: "corrector-rates".into(), passed, fits, checks: Vec::new() };
    io::write_json(&ctx.path("rate_report.json"), &report)?;
    Ok(passed)
}
