//! Command-line driver: argument parsing, configuration, run directories and
//! manifests. Each subcommand lives in [`commands`].

pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;

use std::path::PathBuf;
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use serde::Serialize;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "HOMOG_OUT_DIR";

/// Exit codes of the command-line contract.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const SOLVER: i32 = 2;
    pub const PROPERTY: i32 = 3;
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(homog_core::Error),
    /// Solver failure reported after partial outputs were written.
    Solver(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_solver_failure() => exit::SOLVER,
            CliError::Solver(_) => exit::SOLVER,
            _ => exit::CONFIG,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) if e.is_solver_failure() => "solver",
            CliError::Core(_) => "input",
            CliError::Solver(_) => "solver",
            CliError::Io(_) => "io",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Solver(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<homog_core::Error> for CliError {
    fn from(e: homog_core::Error) -> Self {
        match e {
            homog_core::Error::Io(io) => CliError::Io(io),
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("json: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(format!("csv: {e}"))
    }
}

/// Machine-readable error printed on stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Parser)]
#[command(name = "homog", version, about = "Darcy homogenization toolkit")]
pub struct Cli {
    /// Configuration file (JSON, or TOML with a .toml extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $HOMOG_OUT_DIR or ./homog-out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for the solvers.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Solver tolerance, overriding the configuration.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Treat logged warnings as a failed check (exit code 3).
    #[arg(long, global = true)]
    pub strict: bool,
    /// Seed recorded in the manifest; the solvers themselves are deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resistance matrix from the truncated cell problem.
    Cell(commands::cell::Args),
    /// Corrector norms over an ε-ladder and their log–log slopes.
    CorrectorRates(commands::corrector::Args),
    /// Density-dependent Darcy flow.
    DarcyRun(commands::darcy::Args),
    /// Micro Stokes flow against the Darcy prediction over an ε-ladder.
    MicroCompare(commands::micro::Args),
    /// Poincaré constant of the perforated cell over an ε-ladder.
    Poincare(commands::poincare::Args),
    /// Aggregates rate_report.json files into one summary.
    Report(commands::report::Args),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Cell(_) => "cell",
            Command::CorrectorRates(_) => "corrector-rates",
            Command::DarcyRun(_) => "darcy-run",
            Command::MicroCompare(_) => "micro-compare",
            Command::Poincare(_) => "poincare",
            Command::Report(_) => "report",
        }
    }
}

/// Pass/fail of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value <= threshold }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Check { name: name.into(), value: if ok { 1.0 } else { 0.0 }, threshold: 1.0, pass: ok }
    }
}

/// Common layout of every `rate_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RateReportFile {
    pub command: String,
    pub passed: bool,
    pub fits: Vec<NamedRate>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct NamedRate {
    pub name: String,
    pub report: homog_core::rates::RateReport,
}

static WARNINGS: Mutex<Vec<String>> = Mutex::new(Vec::new());

/// Forwards to `env_logger` and remembers every warning.
struct CountingLogger {
    inner: env_logger::Logger,
}

impl log::Log for CountingLogger {
    fn enabled(&self, m: &log::Metadata) -> bool {
        m.level() <= log::Level::Warn || self.inner.enabled(m)
    }

    fn log(&self, r: &log::Record) {
        if r.level() <= log::Level::Warn {
            if let Ok(mut w) = WARNINGS.lock() {
                w.push(r.args().to_string());
            }
        }
        if self.inner.enabled(r.metadata()) {
            self.inner.log(r);
        }
    }

    fn flush(&self) {
        self.inner.flush();
    }
}

pub fn init_logging() {
    let inner = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).build();
    let level = inner.filter().max(log::LevelFilter::Warn);
    if log::set_boxed_logger(Box::new(CountingLogger { inner })).is_ok() {
        log::set_max_level(level);
    }
}

pub fn take_warnings() -> Vec<String> {
    WARNINGS.lock().map(|mut w| std::mem::take(&mut *w)).unwrap_or_default()
}

/// Parses, runs and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let started = chrono::Utc::now();
    if let Some(k) = cli.threads {
        if k == 0 {
            return report_error(&CliError::Config("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let command = cli.command.name();
    let out = match manifest::OutDir::resolve(cli.out.as_deref()) {
        Ok(o) => o,
        Err(e) => return report_error(&e),
    };
    if let Command::Report(args) = &cli.command {
        return match commands::report::run(args, &out.path) {
            Ok(true) => exit::OK,
            Ok(false) => exit::PROPERTY,
            Err(e) => report_error(&e),
        };
    }
    let config = match &cli.config {
        Some(p) => config::load(p),
        None => Ok(config::RunConfig::default()),
    };
    let config = match config {
        Ok(c) => c,
        Err(e) => return report_error(&e),
    };
    if let Err(e) = out.prepare() {
        return report_error(&e);
    }
    let ctx = commands::Context::new(out.path.clone(), cli.tol);
    let result = match &cli.command {
        Command::Cell(a) => commands::cell::run(a, &config.cell, &ctx),
        Command::CorrectorRates(a) => commands::corrector::run(a, &config.corrector, &ctx),
        Command::DarcyRun(a) => commands::darcy::run(a, &config.darcy, &ctx),
        Command::MicroCompare(a) => commands::micro::run(a, &config.micro, &ctx),
        Command::Poincare(a) => commands::poincare::run(a, &config.poincare, &ctx),
        Command::Report(_) => unreachable!(),
    };
    let warnings = take_warnings();
    let (code, error) = match result {
        Ok(passed) => {
            let code = if !passed || (cli.strict && !warnings.is_empty()) { exit::PROPERTY } else { exit::OK };
            (code, None)
        }
        Err(e) => (e.exit_code(), Some(e)),
    };
    let mut inputs = ctx.inputs.take();
    if let Some(p) = &cli.config {
        inputs.insert(0, p.clone());
    }
    let record = manifest::Record {
        command,
        args: std::env::args().collect(),
        config: ctx.config.take(),
        inputs,
        started,
        seed: cli.seed,
        threads: cli.threads,
        strict: cli.strict,
        tol: cli.tol,
        warnings,
        exit_code: code,
        error: error.as_ref().map(|e| e.to_string()),
    };
    if let Err(e) = out.write_manifest(record) {
        return report_error(&e);
    }
    match error {
        Some(e) => report_error(&e),
        None => code,
    }
}

/// Prints the JSON error on stderr and returns its exit code.
pub fn report_error(e: &CliError) -> i32 {
    let r = ErrorReport { error: e.kind().into(), message: e.to_string(), exit_code: e.exit_code() };
    eprintln!("{}", serde_json::to_string(&r).unwrap_or_else(|_| e.to_string()));
    r.exit_code
}
