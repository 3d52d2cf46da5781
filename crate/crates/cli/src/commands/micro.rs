use serde::Serialize;

use homog_core::micro::{micro_ladder, MicroRow};
use homog_core::Error;

use crate::commands::{named_rate, obstacle_override, print_fit, Context};
use crate::config::MicroConfig;
use crate::{io, Check, CliError, RateReportFile};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub obstacle: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "eps", value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// Grid cells across each hole diameter.
    #[arg(long)]
    pub cells_across: Option<f64>,
}

/// One line of `micro_rates.csv`.
#[derive(Debug, Serialize)]
struct CsvRow {
    epsilon: f64,
    alpha: f64,
    cells_per_eps: usize,
    err_u: f64,
    err_p: f64,
    rel_u: f64,
    lambda_min: f64,
    sigma_check: Option<f64>,
    poincare_ratio: Option<f64>,
    energy_gap: f64,
    div_residual: f64,
}

impl From<&MicroRow> for CsvRow {
    fn from(r: &MicroRow) -> Self {
        CsvRow {
            epsilon: r.epsilon,
            alpha: r.alpha,
            cells_per_eps: r.cells_per_eps,
            err_u: r.err_u,
            err_p: r.err_p,
            rel_u: r.rel_u,
            lambda_min: r.lambda_min,
            sigma_check: r.sigma_check,
            poincare_ratio: r.poincare_ratio,
            energy_gap: r.energy_gap,
            div_residual: r.div_residual,
        }
    }
}

pub fn resolve(args: &Args, cfg: &MicroConfig, ctx: &Context) -> Result<MicroConfig, CliError> {
    let mut c = cfg.clone();
    obstacle_override(&args.obstacle, &mut c.obstacle)?;
    if let Some(a) = args.alpha {
        c.alpha = a;
    }
    if let Some(e) = &args.epsilons {
        c.epsilons = e.clone();
    }
    if let Some(k) = args.cells_across {
        c.options.cells_across = k;
    }
    if let Some(t) = ctx.tol {
        c.options.micro.stokes.tol = t;
        c.options.poincare.tol = t;
    }
    Ok(c)
}

pub fn run(args: &Args, cfg: &MicroConfig, ctx: &Context) -> Result<bool, CliError> {
    let c = resolve(args, cfg, ctx)?;
    ctx.record(&c)?;
    if c.epsilons.len() < 3 {
        return Err(Error::TooFewPoints(c.epsilons.len()).into());
    }
    let ladder = micro_ladder(c.alpha, &c.epsilons, &c.obstacle, &c.options)?;
    let rows: Vec<CsvRow> = ladder.rows.iter().map(CsvRow::from).collect();
    io::write_csv(&ctx.path("micro_rates.csv"), &rows)?;
    io::write_json(&ctx.path("matched_resistance.json"), &ladder.resistance)?;
    for r in &ladder.rows {
        println!("ε = {:<8} err_u {:.4e}  err_p {:.4e}  rel_u {:.4}", r.epsilon, r.err_u, r.err_p, r.rel_u);
    }
    print_fit("err_u", &ladder.fit);
    let p_pts: Vec<(f64, f64)> = ladder.rows.iter().map(|r| (r.epsilon, r.err_p)).collect();
    let mut fits = vec![named_rate("err_u", &ladder.fit)];
    if let Ok(fp) = homog_core::rates::fit_rate(&p_pts) {
        fits.push(named_rate("err_p", &fp));
    }
    let passed = ladder.passed();
    let report = RateReportFile {
        command: "micro-compare".into(),
        passed,
        fits,
        checks: vec![Check::flag("err_u_monotone", ladder.monotone)],
    };
    io::write_json(&ctx.path("rate_report.json"), &report)?;
    Ok(passed)
}
