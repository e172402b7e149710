//! Experiment harness: configs, runners and reports.

mod config;
mod reference;
mod report;

pub use config::{
    load_config, parse_config, CostSpec, DriftSpec, DynamicsSpec, ExperimentConfig, ExperimentKind, RunSpec,
    TemplateKind, DEFAULT_PARTICLES, DEFAULT_STEPS, PARTICLES_PER_N,
};
pub use reference::{linear_gaussian, log_mgf_reference, mean_path, LinearGaussian};
pub use report::{Check, Comparison, ExperimentReport, Provenance, ReportRow, Rule, CSV_COLUMNS};
mod chaos;
mod fw;
mod gibbs;
mod pl;
mod vanish;

pub use chaos::run_chaos_sweep;
pub use fw::{frozen_law_coefficients, run_fw_sweep};
pub use gibbs::run_gibbs_check;
pub use pl::{bump_integrals, relative_slack, rho_slack, run_pl_check, BumpTriple, PROBE_BOX, PROBE_PAIRS};
pub use vanish::run_vanish_sweep;

use crate::error::{Diagnostic, Error, Result};
use crate::limit::ActionOptions;
use crate::particles::{InitialCondition, TimeGrid};

/// A report together with named text artifacts (CSV files).
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub artifacts: Vec<(String, String)>,
}

pub(crate) fn config_error(message: impl Into<String>) -> Error {
    Error::Config(vec![Diagnostic {
        line: None,
        message: message.into(),
    }])
}

pub(crate) fn unit_grid(steps: usize) -> Result<TimeGrid> {
    TimeGrid::unit(steps)
}

/// The starting state when the initial law is a point mass.
pub(crate) fn point_start(init: &InitialCondition) -> Option<Vec<f64>> {
    match init {
        InitialCondition::Point(x) => Some(x.clone()),
        InitialCondition::Discrete(p) if !p.is_empty() && p.iter().all(|x| x == &p[0]) => Some(p[0].clone()),
        InitialCondition::Normal { mean, sd } if sd.iter().all(|s| *s == 0.0) => Some(mean.clone()),
        InitialCondition::Uniform { lo, hi } if lo == hi => Some(lo.clone()),
        _ => None,
    }
}

pub(crate) fn action_options(cfg: &ExperimentConfig, seed: u64) -> ActionOptions {
    ActionOptions {
        cells: cfg.run.action_cells,
        max_evaluations: cfg.run.action_evaluations,
        restarts: cfg.run.action_restarts,
        start_spread: 1.0,
        seed,
    }
}

/// Runs the experiment `kind` on `cfg`.
pub fn run_experiment(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    match kind {
        ExperimentKind::Gibbs => run_gibbs_check(cfg),
        ExperimentKind::Fw => run_fw_sweep(cfg),
        ExperimentKind::Vanish => run_vanish_sweep(cfg),
        ExperimentKind::Chaos => run_chaos_sweep(cfg),
        ExperimentKind::Pl => run_pl_check(cfg),
    }
}
