use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{io, CliError, RateReportFile};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directories searched recursively for rate_report.json files
    /// [default: the output directory].
    pub dirs: Vec<PathBuf>,
    /// Also write the summary to this file.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub path: String,
    pub command: String,
    pub passed: bool,
    /// `(name, slope, pass)` of every fit.
    pub fits: Vec<(String, f64, Option<bool>)>,
    pub failed_checks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: bool,
    pub reports: Vec<SummaryEntry>,
}

pub fn collect(dirs: &[PathBuf]) -> Result<Summary, CliError> {
    let mut reports = Vec::new();
    for d in dirs {
        if !d.is_dir() {
            return Err(CliError::Config(format!("{} is not a directory", d.display())));
        }
        for e in walkdir::WalkDir::new(d).sort_by_file_name() {
            let e = e.map_err(|e| CliError::Config(e.to_string()))?;
            if e.file_type().is_file() && e.file_name() == "rate_report.json" {
                reports.push(entry(e.path())?);
            }
        }
    }
    if reports.is_empty() {
        return Err(CliError::Config("no rate_report.json found".into()));
    }
    Ok(Summary { passed: reports.iter().all(|r| r.passed), reports })
}

fn entry(path: &Path) -> Result<SummaryEntry, CliError> {
    let text = std::fs::read_to_string(path)?;
    let r: RateReportFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("bad rate report {}: {e}", path.display())))?;
    Ok(SummaryEntry {
        path: path.display().to_string(),
        command: r.command,
        passed: r.passed,
        fits: r.fits.iter().map(|f| (f.name.clone(), f.report.slope, f.report.pass)).collect(),
        failed_checks: r.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect(),
    })
}

/// Prints the summary as JSON; returns the overall verdict.
pub fn run(args: &Args, default_dir: &Path) -> Result<bool, CliError> {
    let dirs = if args.dirs.is_empty() { vec![default_dir.to_path_buf()] } else { args.dirs.clone() };
    let s = collect(&dirs)?;
    println!("{}", serde_json::to_string_pretty(&s)?);
    if let Some(p) = &args.summary {
        io::write_json(p, &s)?;
    }
    Ok(s.passed)
}
