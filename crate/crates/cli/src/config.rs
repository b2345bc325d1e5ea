//! Run configuration: command-line flags layered over an optional flat
//! `key=value` file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use biot_core::{Algorithm, Diagonal, IterationControl, ParamError, PhysParams, Preset};
use clap::{Parser, ValueEnum};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Energy,
    Contraction,
    Korn,
    Rates,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Self::Energy => "energy",
            Self::Contraction => "contraction",
            Self::Korn => "korn",
            Self::Rates => "rates",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Self as ValueEnum>::from_str(s, false).map_err(|_| format!("unknown check {s:?}"))
    }
}

/// Convergence studies and self-checks for the three-field Biot solver.
#[derive(Debug, Parser, Default)]
#[command(name = "biot-split", version, arg_required_else_help = true)]
pub struct Cli {
    /// Flat key=value file; flags given on the command line take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// coupled, te or iterative.
    #[arg(long, value_parser = parse_with::<Algorithm>)]
    pub algorithm: Option<Algorithm>,
    /// nu03, nu0499, lowk or c0zero; explicit material flags override it.
    #[arg(long, value_parser = parse_with::<Preset>)]
    pub preset: Option<Preset>,
    /// Young's modulus.
    #[arg(long = "E", value_name = "E", allow_negative_numbers = true)]
    pub youngs: Option<f64>,
    /// Poisson ratio.
    #[arg(long, allow_negative_numbers = true)]
    pub nu: Option<f64>,
    /// Biot-Willis constant.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Specific storage.
    #[arg(long, allow_negative_numbers = true)]
    pub c0: Option<f64>,
    /// Hydraulic conductivity.
    #[arg(long = "K", value_name = "K", allow_negative_numbers = true)]
    pub conductivity: Option<f64>,
    /// Time step.
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    /// Terminal time.
    #[arg(long = "T", value_name = "T", allow_negative_numbers = true)]
    pub t_final: Option<f64>,
    /// Cells per side of the coarsest mesh.
    #[arg(long)]
    pub n0: Option<usize>,
    /// Number of meshes in the refinement chain.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Fixed number of sweeps per step (iterative algorithm).
    #[arg(long)]
    pub iter: Option<usize>,
    /// Stop sweeping once the total-pressure increment drops below this.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Sweep limit for --tol.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Cell diagonal of the uniform meshes: rising or falling.
    #[arg(long, value_parser = parse_with::<Diagonal>)]
    pub diagonal: Option<Diagonal>,
    /// Self-check to run after the study; repeatable.
    #[arg(long = "check", value_enum)]
    pub checks: Vec<Check>,
    /// Error table as CSV.
    #[arg(long, value_name = "FILE")]
    pub out_csv: Option<PathBuf>,
    /// Full report with the effective configuration as JSON.
    #[arg(long, value_name = "FILE")]
    pub out_json: Option<PathBuf>,
    /// Write the coupled block matrix of the coarsest mesh (MatrixMarket).
    #[arg(long, value_name = "FILE")]
    pub dump_matrix: Option<PathBuf>,
}

fn parse_with<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: expected key=value")]
    Syntax { path: PathBuf, line: usize },
    #[error("{path}:{line}: unknown key {key:?}")]
    UnknownKey { path: PathBuf, line: usize, key: String },
    #[error("{path}:{line}: key {key:?} given twice")]
    DuplicateKey { path: PathBuf, line: usize, key: String },
    #[error("{path}:{line}: invalid value {value:?} for {key}: {reason}")]
    Value { path: PathBuf, line: usize, key: String, value: String, reason: String },
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("refinement levels must be at least 2 (got {0})")]
    Levels(usize),
    #[error("coarsest mesh needs at least one cell per side")]
    Cells,
    #[error("the iterative algorithm needs --iter or --tol")]
    MissingIteration,
    #[error("--iter must be at least 1")]
    ZeroIter,
    #[error("--tol must be positive (got {0})")]
    Tolerance(f64),
}

const KEYS: &[&str] = &[
    "algorithm",
    "preset",
    "E",
    "nu",
    "alpha",
    "c0",
    "K",
    "dt",
    "T",
    "n0",
    "levels",
    "iter",
    "tol",
    "max-iter",
    "diagonal",
    "check",
    "out-csv",
    "out-json",
    "dump-matrix",
];

/// Reads a flat `key=value` file into a [`Cli`] with only those fields set.
/// Blank lines and lines starting with `#` are ignored; `check` takes a
/// comma-separated list.
pub fn read_config_file(path: &Path) -> Result<Cli, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
    let mut seen = BTreeMap::new();
    let mut cli = Cli::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Syntax { path: path.into(), line })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey { path: path.into(), line, key: key.into() });
        }
        if seen.insert(key.to_string(), line).is_some() {
            return Err(ConfigError::DuplicateKey { path: path.into(), line, key: key.into() });
        }
        let bad = |reason: String| ConfigError::Value {
            path: path.into(),
            line,
            key: key.into(),
            value: value.into(),
            reason,
        };
        match key {
            "algorithm" => cli.algorithm = Some(parse_with(value).map_err(bad)?),
            "preset" => cli.preset = Some(parse_with(value).map_err(bad)?),
            "E" => cli.youngs = Some(parse_with(value).map_err(bad)?),
            "nu" => cli.nu = Some(parse_with(value).map_err(bad)?),
            "alpha" => cli.alpha = Some(parse_with(value).map_err(bad)?),
            "c0" => cli.c0 = Some(parse_with(value).map_err(bad)?),
            "K" => cli.conductivity = Some(parse_with(value).map_err(bad)?),
            "dt" => cli.dt = Some(parse_with(value).map_err(bad)?),
            "T" => cli.t_final = Some(parse_with(value).map_err(bad)?),
            "n0" => cli.n0 = Some(parse_with(value).map_err(bad)?),
            "levels" => cli.levels = Some(parse_with(value).map_err(bad)?),
            "iter" => cli.iter = Some(parse_with(value).map_err(bad)?),
            "tol" => cli.tol = Some(parse_with(value).map_err(bad)?),
            "max-iter" => cli.max_iter = Some(parse_with(value).map_err(bad)?),
            "diagonal" => cli.diagonal = Some(parse_with(value).map_err(bad)?),
            "check" => {
                cli.checks = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(<Check as FromStr>::from_str)
                    .collect::<Result<_, _>>()
                    .map_err(bad)?;
            }
            "out-csv" => cli.out_csv = Some(value.into()),
            "out-json" => cli.out_json = Some(value.into()),
            "dump-matrix" => cli.dump_matrix = Some(value.into()),
            _ => unreachable!("key list and match arms agree"),
        }
    }
    Ok(cli)
}

/// Validated configuration of one run. Serialized verbatim into the JSON
/// report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub preset: Option<Preset>,
    pub params: PhysParams,
    pub n0: usize,
    pub levels: usize,
    pub diagonal: Diagonal,
    pub iter: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub checks: Vec<Check>,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
    pub dump_matrix: Option<PathBuf>,
}

impl RunConfig {
    /// Layers `flags` over `file` and validates the result.
    pub fn resolve(flags: Cli, file: Option<Cli>) -> Result<Self, ConfigError> {
        let file = file.unwrap_or_default();
        macro_rules! pick {
            ($field:ident) => {
                flags.$field.or(file.$field)
            };
        }
        let algorithm = pick!(algorithm).unwrap_or(Algorithm::Coupled);
        let preset = pick!(preset);
        let (nu0, c00, k0) = preset.unwrap_or(Preset::Nu03).values();
        let params = PhysParams::new(
            pick!(youngs).unwrap_or(1.0),
            pick!(nu).unwrap_or(nu0),
            pick!(alpha).unwrap_or(1.0),
            pick!(c0).unwrap_or(c00),
            pick!(conductivity).unwrap_or(k0),
            pick!(dt).unwrap_or(1e-3),
            pick!(t_final).unwrap_or(0.01),
        )?;
        let n0 = pick!(n0).unwrap_or(16);
        if n0 == 0 {
            return Err(ConfigError::Cells);
        }
        let levels = pick!(levels).unwrap_or(4);
        if levels < 2 {
            return Err(ConfigError::Levels(levels));
        }
        let iter = pick!(iter);
        let tol = pick!(tol);
        if iter == Some(0) {
            return Err(ConfigError::ZeroIter);
        }
        if let Some(t) = tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(ConfigError::Tolerance(t));
            }
        }
        if algorithm == Algorithm::Iterative && iter.is_none() && tol.is_none() {
            return Err(ConfigError::MissingIteration);
        }
        let mut checks = if flags.checks.is_empty() { file.checks } else { flags.checks };
        checks.sort();
        checks.dedup();
        Ok(Self {
            algorithm,
            preset,
            params,
            n0,
            levels,
            diagonal: pick!(diagonal).unwrap_or_default(),
            iter,
            tol,
            max_iter: pick!(max_iter).unwrap_or(1000),
            checks,
            out_csv: pick!(out_csv),
            out_json: pick!(out_json),
            dump_matrix: pick!(dump_matrix),
        })
    }

    /// Sweep rule of the iterative algorithm; a tolerance wins over a count.
    pub fn iteration(&self) -> IterationControl {
        match (self.tol, self.iter) {
            (Some(tol), _) => IterationControl::Tolerance { tol, max_iter: self.max_iter },
            (None, Some(n)) => IterationControl::Fixed(n),
            (None, None) => IterationControl::Fixed(1),
        }
    }
}
