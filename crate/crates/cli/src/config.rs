//! Run configuration: one section per subcommand, read from JSON or TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use homog_core::cell_problem::CellOptions;
use homog_core::corrector::CorrectorOptions;
use homog_core::darcy::{DarcyOptions, DensityInit, ForceField};
use homog_core::geometry::Obstacle;
use homog_core::micro::{MicroLadderOptions, PoincareOptions};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cell: CellConfig,
    pub corrector: CorrectorConfig,
    pub darcy: DarcyConfig,
    pub micro: MicroConfig,
    pub poincare: PoincareConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellConfig {
    pub obstacle: Obstacle,
    pub radii: Vec<f64>,
    /// One resolution for all radii or one per radius.
    pub n: Vec<usize>,
    pub mu: f64,
    pub options: CellOptions,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig {
            obstacle: Obstacle::Ball(0.1),
            radii: vec![2.0, 3.0, 4.0, 6.0],
            n: vec![64],
            mu: 1.0,
            options: CellOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectorConfig {
    pub obstacle: Obstacle,
    pub alpha: f64,
    pub epsilons: Vec<f64>,
    /// Integrability exponents as `"2"`, `"3"`, `"inf"`.
    pub p: Vec<String>,
    /// Truncation radius and resolution of the cell solve.
    pub cell_r: f64,
    pub cell_n: usize,
    /// Overrides every band half-width.
    pub band: Option<f64>,
    pub cell_options: CellOptions,
    pub options: CorrectorOptions,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        CorrectorConfig {
            obstacle: Obstacle::Ball(0.1),
            alpha: 2.0,
            epsilons: vec![0.5, 0.25, 0.125],
            p: vec!["2".into(), "inf".into()],
            cell_r: 6.0,
            cell_n: 64,
            band: None,
            cell_options: CellOptions::default(),
            options: CorrectorOptions::default(),
        }
    }
}

/// Output format of field dumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DumpFormat {
    Vtk,
    Raw,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DarcyDomain {
    Torus,
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DarcyConfig {
    pub n: usize,
    pub domain: DarcyDomain,
    pub density: DensityInit,
    /// Raw dump (with JSON sidecar) replacing `density`.
    pub density_file: Option<String>,
    pub force: ForceField,
    /// Permeability `A`; ignored when `resistance` names a file.
    pub a: [[f64; 3]; 3],
    /// Path to a `resistance.json` whose `a` matrix is used.
    pub resistance: Option<String>,
    pub t_end: f64,
    /// Time step; `None` uses the grid spacing.
    pub dt: Option<f64>,
    /// Dump fields every `dump_every` stored frames; 0 disables dumps.
    pub dump_every: usize,
    pub dump_format: DumpFormat,
    pub options: DarcyOptions,
    /// Thresholds of the invariant checks.
    pub mass_drift_max: f64,
    pub l2_decay_max: f64,
}

impl Default for DarcyConfig {
    fn default() -> Self {
        let k = 1.0 / (6.0 * std::f64::consts::PI * 0.1);
        DarcyConfig {
            n: 32,
            domain: DarcyDomain::Torus,
            density: DensityInit::Gaussian { center: [0.5; 3], width: 0.1, amplitude: 1.0, background: 1.0 },
            density_file: None,
            force: ForceField::Constant { value: [1.0 / k, 0.0, 0.0] },
            a: [[k, 0.0, 0.0], [0.0, k, 0.0], [0.0, 0.0, k]],
            resistance: None,
            t_end: 0.25,
            dt: None,
            dump_every: 0,
            dump_format: DumpFormat::Vtk,
            options: DarcyOptions::default(),
            mass_drift_max: 1e-10,
            l2_decay_max: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroConfig {
    pub obstacle: Obstacle,
    pub alpha: f64,
    pub epsilons: Vec<f64>,
    pub options: MicroLadderOptions,
}

impl Default for MicroConfig {
    fn default() -> Self {
        MicroConfig {
            obstacle: Obstacle::Ball(0.125),
            alpha: 1.5,
            epsilons: vec![0.5, 0.25, 0.125],
            options: MicroLadderOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareConfig {
    pub obstacle: Obstacle,
    pub alpha: f64,
    pub epsilons: Vec<f64>,
    pub band: f64,
    pub options: PoincareOptions,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        PoincareConfig {
            obstacle: Obstacle::Ball(0.125),
            alpha: 2.0,
            epsilons: vec![0.25, 0.125, 0.0625],
            band: 0.2,
            options: PoincareOptions::default(),
        }
    }
}

/// Parses a configuration; `.toml` files are TOML, everything else JSON.
pub fn parse_config(text: &str, toml_syntax: bool) -> Result<RunConfig, CliError> {
    if toml_syntax {
        toml::from_str(text).map_err(|e| CliError::Config(format!("bad config: {e}")))
    } else {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }
}

pub fn to_toml(config: &RunConfig) -> Result<String, CliError> {
    toml::to_string(config).map_err(|e| CliError::Config(format!("cannot write config: {e}")))
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, path.extension().is_some_and(|e| e == "toml"))
}

/// `ball:0.1`, `cube:0.07` or `none`.
pub fn parse_obstacle(s: &str) -> Result<Obstacle, CliError> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("none") {
        return Ok(Obstacle::None);
    }
    let (kind, value) = s
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("bad obstacle '{s}': expected ball:<r>, cube:<w> or none")))?;
    let v: f64 = value.parse().map_err(|_| CliError::Config(format!("bad obstacle size '{value}'")))?;
    match kind.to_ascii_lowercase().as_str() {
        "ball" => Ok(Obstacle::Ball(v)),
        "cube" => Ok(Obstacle::Cube(v)),
        _ => Err(CliError::Config(format!("unknown obstacle kind '{kind}'"))),
    }
}
