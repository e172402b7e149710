//! Particle-count sweep of the distance to a large reference system.

use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{Comparison, ExperimentReport, ReportRow, Rule};
use super::{unit_grid, ExperimentOutcome};
use crate::error::Result;
use crate::particles::chaos_report_averaged;

pub fn run_chaos_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let kind = ExperimentKind::Chaos;
    let run = &cfg.run;
    let coeffs = cfg.dynamics.coefficients(run.noise_index)?;
    let grid = unit_grid(run.steps)?;
    let chaos = chaos_report_averaged(
        &coeffs,
        &grid,
        &cfg.dynamics.init,
        &run.chaos_sizes,
        run.chaos_reference,
        run.chaos_replicates,
        run.seed,
    )?;

    let mut report = ExperimentReport::new(kind, "convergence of the particle law to the mean-field law", cfg);
    let mut labels = Vec::new();
    for row in &chaos.rows {
        let label = format!("N={}", row.particles);
        report.rows.push(ReportRow::new(label.clone(), "w2", row.w2).particles(row.particles));
        labels.push(label);
    }
    report.notes.push(format!(
        "reference system with {} particles; each distance averages {} independent systems",
        chaos.reference_particles, run.chaos_replicates
    ));
    report.check(
        "distances strictly decreasing",
        Rule::NotDecreasing { rows: labels },
        Comparison::AtMost,
        0.0,
    );
    match chaos.slope {
        Some(s) => {
            report.rows.push(ReportRow::new("slope", "loglog-fit", s));
            let hi = report.tolerance("slope_max");
            let lo = report.tolerance("slope_min");
            report.check("slope upper", Rule::Value { row: "slope".into() }, Comparison::AtMost, hi);
            report.check("slope lower", Rule::Value { row: "slope".into() }, Comparison::AtLeast, lo);
        }
        None => report
            .notes
            .push("some distance is zero; no log-log slope (deterministic system)".into()),
    }
    Ok(ExperimentOutcome {
        report,
        artifacts: Vec::new(),
    })
}
