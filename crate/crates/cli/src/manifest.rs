//! Output directories and the run manifest.
//!
//! A run owns its output directory. Files listed by a previous manifest are
//! removed before the next run; anything else in the directory is an error,
//! so the manifest always describes exactly what is on disk.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, OUT_DIR_ENV};

pub const MANIFEST: &str = "manifest.json";
const DEFAULT_OUT: &str = "homog-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub tool_version: String,
    /// Resolved configuration section of the command.
    pub config: serde_json::Value,
    pub started: String,
    pub finished: String,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<OutputFile>,
    pub out_dir: String,
    /// `flag`, `env` or `default`.
    pub out_dir_source: String,
    /// Value of the output-directory environment variable, if set.
    pub out_dir_env: Option<String>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub strict: bool,
    pub tol: Option<f64>,
    pub warnings: Vec<String>,
    pub exit_code: i32,
    pub error: Option<String>,
}

/// What a command hands over for its manifest.
pub struct Record {
    pub command: &'static str,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub started: chrono::DateTime<chrono::Utc>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub strict: bool,
    pub tol: Option<f64>,
    pub warnings: Vec<String>,
    pub exit_code: i32,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct OutDir {
    pub path: PathBuf,
    pub source: &'static str,
    pub env_value: Option<String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let k = f.read(&mut buf)?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
    }
    Ok(format!("{:x}", h.finalize()))
}

fn relative(root: &Path, p: &Path) -> String {
    let rel = p.strip_prefix(root).unwrap_or(p);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

impl OutDir {
    /// `--out`, else the environment variable, else `./homog-out`.
    pub fn resolve(flag: Option<&Path>) -> Result<OutDir, CliError> {
        let env_value = std::env::var(OUT_DIR_ENV).ok().filter(|s| !s.is_empty());
        let (path, source) = match (flag, &env_value) {
            (Some(p), _) => (p.to_path_buf(), "flag"),
            (None, Some(e)) => (PathBuf::from(e), "env"),
            (None, None) => (PathBuf::from(DEFAULT_OUT), "default"),
        };
        Ok(OutDir { path, source, env_value })
    }

    /// Creates the directory, removes the outputs of a previous run and
    /// refuses to mix with foreign files.
    pub fn prepare(&self) -> Result<(), CliError> {
        if self.path.exists() && !self.path.is_dir() {
            return Err(CliError::Config(format!("output path {} is not a directory", self.path.display())));
        }
        std::fs::create_dir_all(&self.path)?;
        let manifest = self.path.join(MANIFEST);
        if manifest.is_file() {
            let old: RunManifest = serde_json::from_str(&std::fs::read_to_string(&manifest)?)
                .map_err(|e| CliError::Config(format!("unreadable manifest in {}: {e}", self.path.display())))?;
            for o in &old.outputs {
                let p = self.path.join(&o.path);
                if p.starts_with(&self.path) && p.is_file() {
                    std::fs::remove_file(&p)?;
                }
            }
            std::fs::remove_file(&manifest)?;
            // directories emptied by the cleanup go too
            for e in walkdir::WalkDir::new(&self.path).min_depth(1).contents_first(true) {
                let e = e.map_err(|e| CliError::Config(e.to_string()))?;
                if e.file_type().is_dir() && std::fs::read_dir(e.path())?.next().is_none() {
                    std::fs::remove_dir(e.path())?;
                }
            }
        }
        if let Some(entry) = std::fs::read_dir(&self.path)?.next() {
            let entry = entry?;
            return Err(CliError::Config(format!(
                "output directory {} holds files not produced by a previous run (e.g. {})",
                self.path.display(),
                entry.file_name().to_string_lossy()
            )));
        }
        Ok(())
    }

    /// Every file now in the directory, sorted.
    pub fn outputs(&self) -> Result<Vec<OutputFile>, CliError> {
        let mut out = Vec::new();
        for e in walkdir::WalkDir::new(&self.path).min_depth(1).sort_by_file_name() {
            let e = e.map_err(|e| CliError::Config(e.to_string()))?;
            if !e.file_type().is_file() {
                continue;
            }
            let rel = relative(&self.path, e.path());
            if rel == MANIFEST {
                continue;
            }
            out.push(OutputFile {
                sha256: sha256_file(e.path())?,
                bytes: e.metadata().map_err(|e| CliError::Config(e.to_string()))?.len(),
                path: rel,
            });
        }
        Ok(out)
    }

    pub fn write_manifest(&self, r: Record) -> Result<RunManifest, CliError> {
        let inputs = r
            .inputs
            .iter()
            .map(|p| InputFile {
                path: p.display().to_string(),
                sha256: sha256_file(p).unwrap_or_else(|_| "unreadable".into()),
            })
            .collect();
        let m = RunManifest {
            command: r.command.into(),
            args: r.args,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: r.config,
            started: r.started.to_rfc3339(),
            finished: chrono::Utc::now().to_rfc3339(),
            inputs,
            outputs: self.outputs()?,
            out_dir: self.path.display().to_string(),
            out_dir_source: self.source.into(),
            out_dir_env: self.env_value.clone(),
            seed: r.seed,
            threads: r.threads,
            strict: r.strict,
            tol: r.tol,
            warnings: r.warnings,
            exit_code: r.exit_code,
            error: r.error,
        };
        crate::io::write_json(&self.path.join(MANIFEST), &m)?;
        Ok(m)
    }
}
