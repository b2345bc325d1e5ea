//! Self-checks run after a study. Each produces a JSON summary and a list
//! of failures.

use std::sync::Arc;

use biot_core::{
    build_uniform_with, consistent_total_pressure, contraction_monitor, energy_check, korn_check, BiotError, BiotState,
    CoupledSolver, DiscreteSystem, ErrorReport, FieldErrors, FrozenHomogeneous, ManufacturedCase, Space, SpaceKind,
};
use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Check, RunConfig};

/// Finest-level rate floors, in [`FieldErrors::NAMES`] order.
pub const RATE_FLOORS: [f64; 6] = [1.8, 1.8, 1.8, 0.9, 1.8, 0.9];
pub const ENERGY_TOLERANCE: f64 = 1e-9;
pub const KORN_SAMPLES: usize = 1000;
const ENERGY_STEPS: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub check: String,
    pub detail: String,
}

impl Failure {
    pub fn new(check: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { check: check.into(), detail: detail.into() }
    }
}

pub struct CheckOutcome {
    pub summary: Value,
    pub failures: Vec<Failure>,
}

pub fn run_check(check: Check, config: &RunConfig, report: &ErrorReport) -> Result<CheckOutcome, BiotError> {
    match check {
        Check::Rates => Ok(rates(report)),
        Check::Contraction => contraction(config),
        Check::Energy => energy(config),
        Check::Korn => korn(config),
    }
}

fn rates(report: &ErrorReport) -> CheckOutcome {
    let mut failures = Vec::new();
    let finest = report.finest_rates().unwrap_or([f64::NAN; 6]);
    for (k, name) in FieldErrors::NAMES.iter().enumerate() {
        if finest[k].is_nan() || finest[k] < RATE_FLOORS[k] {
            failures.push(Failure::new("rates", format!("rate_{name} = {:.2} < {}", finest[k], RATE_FLOORS[k])));
        }
    }
    for pair in report.levels.windows(2) {
        let (c, f) = (pair[0].errors.as_array(), pair[1].errors.as_array());
        for (k, name) in FieldErrors::NAMES.iter().enumerate() {
            if f[k].is_nan() || f[k] >= c[k] {
                failures.push(Failure::new(
                    "rates",
                    format!("err_{name} does not decrease from 1/h={} to 1/h={}", pair[0].inv_h, pair[1].inv_h),
                ));
            }
        }
    }
    let summary = json!({ "finest_rates": finest, "floors": RATE_FLOORS });
    CheckOutcome { summary, failures }
}

fn coarse_system(config: &RunConfig, energy: bool) -> Result<(DiscreteSystem, ManufacturedCase), BiotError> {
    let mesh = Arc::new(build_uniform_with(config.n0, config.diagonal).expect("n0 validated"));
    let case = ManufacturedCase::new(config.params);
    let sys = if energy {
        DiscreteSystem::new(mesh, config.params, Arc::new(FrozenHomogeneous::new(Arc::new(case), 0.0)))?
    } else {
        DiscreteSystem::new(mesh, config.params, Arc::new(case))?
    };
    Ok((sys, case))
}

fn contraction(config: &RunConfig) -> Result<CheckOutcome, BiotError> {
    let (sys, case) = coarse_system(config, false)?;
    let start = case.initial_state(&sys, 0.0)?;
    let imax = config.iter.unwrap_or(25).max(20);
    let r = contraction_monitor(&sys, &start, imax)?;
    let reduce = r.iterations_to_reduce(1e-8);
    info!(
        "contraction: {} ratios, max {:.6} (rho {:.6}); 1e-8 reduction after {} sweeps",
        r.ratios.len(),
        r.max_ratio(),
        r.rho,
        reduce.map_or("more than imax".to_string(), |n| n.to_string())
    );
    let mut failures = Vec::new();
    let mut push = |what: &str, its: &[usize]| {
        if !its.is_empty() {
            failures.push(Failure::new("contraction", format!("{what} violated at iterations {its:?}")));
        }
    };
    push("ratio <= rho + 1e-8", &r.ratio_violations);
    push("pressure bound", &r.pressure_violations);
    push("strain bound", &r.strain_violations);
    push("monotone decrease", &r.monotonicity_violations);
    let summary = json!({
        "iterations": imax,
        "max_ratio": r.max_ratio(),
        "iterations_to_1e-8": reduce,
        "report": r,
    });
    Ok(CheckOutcome { summary, failures })
}

fn energy(config: &RunConfig) -> Result<CheckOutcome, BiotError> {
    let (sys, case) = coarse_system(config, true)?;
    let mut start = case.initial_state(&sys, 0.0)?;
    for f in [&mut start.u, &mut start.p] {
        let space = f.space().clone();
        for &i in space.constrained_dofs() {
            f.values_mut()[i] = 0.0;
        }
    }
    let xi = consistent_total_pressure(&sys, &start.u, &start.p)?;
    let mut traj = vec![BiotState { xi, ..start }];
    let solver = CoupledSolver::new(&sys)?;
    for _ in 0..ENERGY_STEPS {
        let (next, _) = solver.step(traj.last().expect("nonempty"))?;
        traj.push(next);
    }
    let r = energy_check(&sys, &traj);
    info!("energy: max defect {:.3e} over {ENERGY_STEPS} steps", r.max_defect());
    let mut failures = Vec::new();
    if r.max_defect().is_nan() || r.max_defect() > ENERGY_TOLERANCE {
        failures.push(Failure::new("energy", format!("defect {:.3e} > {ENERGY_TOLERANCE:e}", r.max_defect())));
    }
    if r.min_dissipation_term < 0.0 {
        failures.push(Failure::new("energy", format!("negative dissipation term {:e}", r.min_dissipation_term)));
    }
    Ok(CheckOutcome { summary: json!({ "steps": ENERGY_STEPS, "max_defect": r.max_defect(), "report": r }), failures })
}

fn korn(config: &RunConfig) -> Result<CheckOutcome, BiotError> {
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (k, n) in [config.n0, 2 * config.n0].into_iter().enumerate() {
        let mesh = Arc::new(build_uniform_with(n, config.diagonal).expect("n0 validated"));
        let space = Arc::new(Space::new(SpaceKind::P2Vector, mesh, &[]));
        let r = korn_check(&space, KORN_SAMPLES, k as u64)?;
        info!("korn: 1/h={n}: {} violations, max ratio {:.4}", r.violations, r.max_ratio);
        if r.violations > 0 {
            failures
                .push(Failure::new("korn", format!("{} of {} samples violate at 1/h={n}", r.violations, r.samples)));
        }
        reports.push(json!({ "inv_h": n, "report": r }));
    }
    Ok(CheckOutcome { summary: Value::Array(reports), failures })
}
