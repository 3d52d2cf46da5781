use serde::Serialize;

use homog_core::micro::poincare_ladder;
use homog_core::Error;

use crate::commands::{named_rate, obstacle_override, print_fit, Context};
use crate::config::PoincareConfig;
use crate::{io, CliError, RateReportFile};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub obstacle: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "eps", value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// Half-width of the slope band around (3−α)/2.
    #[arg(long)]
    pub band: Option<f64>,
}

/// One line of `poincare.csv`.
#[derive(Debug, Serialize)]
struct CsvRow {
    epsilon: f64,
    alpha: f64,
    lambda_min: f64,
    sigma_check: Option<f64>,
    sigma_eps: f64,
    degenerate: bool,
}

pub fn resolve(args: &Args, cfg: &PoincareConfig, ctx: &Context) -> Result<PoincareConfig, CliError> {
    let mut c = cfg.clone();
    obstacle_override(&args.obstacle, &mut c.obstacle)?;
    if let Some(a) = args.alpha {
        c.alpha = a;
    }
    if let Some(e) = &args.epsilons {
        c.epsilons = e.clone();
    }
    if let Some(b) = args.band {
        c.band = b;
    }
    if let Some(t) = ctx.tol {
        c.options.tol = t;
    }
    Ok(c)
}

pub fn run(args: &Args, cfg: &PoincareConfig, ctx: &Context) -> Result<bool, CliError> {
    let c = resolve(args, cfg, ctx)?;
    ctx.record(&c)?;
    if c.epsilons.len() < 3 {
        return Err(Error::TooFewPoints(c.epsilons.len()).into());
    }
    if !(c.band >= 0.0) {
        return Err(CliError::Config(format!("band half-width {} must be ≥ 0", c.band)));
    }
    let ladder = poincare_ladder(c.alpha, &c.epsilons, &c.obstacle, &c.options, c.band)?;
    let rows: Vec<CsvRow> = ladder
        .rows
        .iter()
        .map(|r| CsvRow {
            epsilon: r.epsilon,
            alpha: r.alpha,
            lambda_min: r.lambda_min,
            sigma_check: r.sigma_check,
            sigma_eps: r.sigma_eps,
            degenerate: r.degenerate,
        })
        .collect();
    io::write_csv(&ctx.path("poincare.csv"), &rows)?;
    for r in &ladder.rows {
        println!("ε = {:<8} λ_min {:.5}  constant {:.5e}", r.epsilon, r.lambda_min, r.sigma_check.unwrap_or(f64::NAN));
    }
    print_fit("poincare", &ladder.fit);
    let passed = ladder.passed();
    let report = RateReportFile {
        command: "poincare".into(),
        passed,
        fits: vec![named_rate("poincare_constant", &ladder.fit)],
        checks: Vec::new(),
    };
    io::write_json(&ctx.path("rate_report.json"), &report)?;
    Ok(passed)
}
