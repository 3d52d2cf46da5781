//! One module per subcommand. Each returns whether its property checks
//! passed, or a [`CliError`](crate::CliError); exit codes are decided in
//! [`crate::run`].

pub mod cell;
pub mod corrector;
pub mod darcy;
pub mod micro;
pub mod poincare;
pub mod report;

use std::cell::RefCell;
use std::path::PathBuf;

use homog_core::geometry::Obstacle;

use crate::{config, CliError};

/// Settings shared by every command.
pub struct Context {
    pub out: PathBuf,
    pub tol: Option<f64>,
    /// Resolved configuration and extra input files, kept for the manifest
    /// even when the command fails.
    pub config: RefCell<serde_json::Value>,
    pub inputs: RefCell<Vec<PathBuf>>,
}

impl Context {
    pub fn new(out: PathBuf, tol: Option<f64>) -> Self {
        Context { out, tol, config: RefCell::new(serde_json::Value::Null), inputs: RefCell::new(Vec::new()) }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn record<T: serde::Serialize>(&self, config: &T) -> Result<(), CliError> {
        *self.config.borrow_mut() = serde_json::to_value(config)?;
        Ok(())
    }

    pub fn input(&self, p: PathBuf) {
        self.inputs.borrow_mut().push(p);
    }
}

pub(crate) fn obstacle_override(flag: &Option<String>, current: &mut Obstacle) -> Result<(), CliError> {
    if let Some(s) = flag {
        *current = config::parse_obstacle(s)?;
    }
    Ok(())
}

pub(crate) fn named_rate(name: &str, report: &homog_core::rates::RateReport) -> crate::NamedRate {
    crate::NamedRate { name: name.into(), report: report.clone() }
}

pub(crate) fn print_fit(name: &str, r: &homog_core::rates::RateReport) {
    let verdict = match r.pass {
        Some(true) => "pass",
        Some(false) => "FAIL",
        None => "-",
    };
    let band = r.band.map_or(String::new(), |b| {
        if b.one_sided {
            format!(" (band ≥ {:.3})", b.center - b.half_width)
        } else {
            format!(" (band {:.3} ± {:.3})", b.center, b.half_width)
        }
    });
    println!("{name:<16} slope {:>8.4}  R² {:.4}{band}  {verdict}", r.slope, r.r_squared);
}
