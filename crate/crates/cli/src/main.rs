//! `biot-split`: convergence studies of the coupled, time-extrapolated and
//! iterative decoupled Biot solvers on the manufactured benchmark.
//!
//! Exit status: 0 when every requested check passed, 1 when a check failed
//! or a solve was tainted, 2 on invalid configuration, 3 on I/O or solver
//! errors.

mod checks;
mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use biot_core::{
    build_uniform_with, format_sci, run_study, BiotError, DiscreteSystem, ErrorReport, ManufacturedCase, SolveStats,
    StudyConfig, StudyError,
};
use clap::Parser;
use log::{error, info};
use serde_json::{json, Value};
use thiserror::Error;

use checks::{run_check, Failure};
use config::{read_config_file, Cli, ConfigError, RunConfig};

const THREADS_VAR: &str = "BIOT_SPLIT_THREADS";

#[derive(Debug, Error)]
enum RunError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Biot(#[from] BiotError),
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), RunError> {
    let io = |source| RunError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    f(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR}={raw:?} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    info!("assembly limited to {n} threads");
    Ok(())
}

fn dump_matrix(config: &RunConfig, path: &Path) -> Result<(), RunError> {
    let mesh = Arc::new(build_uniform_with(config.n0, config.diagonal).expect("n0 validated"));
    let case = ManufacturedCase::new(config.params);
    let sys = DiscreteSystem::new(mesh, config.params, Arc::new(case))?;
    let m = sys.coupled_matrix();
    info!("writing {}x{} coupled matrix ({} nonzeros) to {}", m.nrows(), m.ncols(), m.nnz(), path.display());
    write_file(path, |w| m.write_matrix_market(w))
}

struct Outcome {
    report: ErrorReport,
    checks: BTreeMap<&'static str, Value>,
    failures: Vec<Failure>,
}

fn run(config: &RunConfig) -> Result<Outcome, RunError> {
    if let Some(path) = &config.dump_matrix {
        dump_matrix(config, path)?;
    }
    let study = StudyConfig {
        algorithm: config.algorithm,
        params: config.params,
        n0: config.n0,
        levels: config.levels,
        diagonal: config.diagonal,
        iteration: config.iteration(),
    };
    info!(
        "{} study: {} steps of dt={:e}, 1/h = {}..{}",
        config.algorithm,
        config.params.num_steps(),
        config.params.dt,
        config.n0,
        config.n0 << (config.levels - 1)
    );
    let report = run_study(&study, &mut |l| {
        let errors: Vec<String> = l.errors.as_array().iter().map(|&e| format_sci(e)).collect();
        info!(
            "1/h={:<4} dofs={:<7} errors {} max residual {:.1e}",
            l.inv_h,
            l.dofs,
            errors.join(" "),
            l.stats.max_residual
        );
    })?;

    let mut failures = Vec::new();
    let stats = report.stats();
    if stats.tainted() {
        failures.push(Failure::new(
            "residual",
            format!("max relative residual {:.3e} exceeds {:e}", stats.max_residual, SolveStats::RESIDUAL_LIMIT),
        ));
    }
    let mut checks = BTreeMap::new();
    for &check in &config.checks {
        let outcome = run_check(check, config, &report)?;
        let passed = outcome.failures.is_empty();
        info!("check {check}: {}", if passed { "pass" } else { "FAIL" });
        checks.insert(check.name(), json!({ "passed": passed, "summary": outcome.summary }));
        failures.extend(outcome.failures);
    }
    Ok(Outcome { report, checks, failures })
}

fn write_outputs(config: &RunConfig, outcome: &Outcome, csv: &str) -> Result<(), RunError> {
    if let Some(path) = &config.out_csv {
        write_file(path, |w| w.write_all(csv.as_bytes()))?;
    }
    if let Some(path) = &config.out_json {
        let stats = outcome.report.stats();
        let doc = json!({
            "config": config,
            "steps": config.params.num_steps(),
            "tainted": stats.tainted(),
            "max_residual": stats.max_residual,
            "report": &outcome.report,
            "checks": &outcome.checks,
            "failures": &outcome.failures,
            "passed": outcome.failures.is_empty(),
        });
        write_file(path, |w| {
            serde_json::to_writer_pretty(&mut *w, &doc)?;
            writeln!(w)
        })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let flags = Cli::parse();
    let file = match flags.config.as_deref().map(read_config_file).transpose() {
        Ok(f) => f,
        Err(e) => return config_error(e),
    };
    let config = match RunConfig::resolve(flags, file) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }

    let outcome = match run(&config) {
        Ok(o) => o,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(3);
        }
    };
    let csv = outcome.report.to_csv();
    print!("{csv}");
    if let Err(e) = write_outputs(&config, &outcome, &csv) {
        error!("{e}");
        return ExitCode::from(3);
    }

    let status = if outcome.failures.is_empty() { "ok" } else { "fail" };
    println!("{}", json!({ "status": status, "failures": &outcome.failures }));
    if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn config_error(e: ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}
