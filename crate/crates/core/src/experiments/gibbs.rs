//! Primal, dual and backward-regression values of `rho` for the quadratic penalty.

use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{Comparison, ExperimentReport, ReportRow, Rule};
use super::{config_error, unit_grid, ExperimentOutcome};
use crate::error::Result;
use crate::rho::{
    dual_gap_report, rho_truncated_sequence, DualBudget, LadderOptions, TruncationMethod,
};
use crate::experiments::reference::log_mgf_reference;
use crate::rng::derive_seed;

pub fn run_gibbs_check(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let kind = ExperimentKind::Gibbs;
    if !cfg.cost.is_standard_quadratic() {
        return Err(config_error("[cost] the gibbs check needs kind = \"quadratic\", scale = 1 and no offset"));
    }
    let run = &cfg.run;
    let n = run.noise_index;
    let coeffs = cfg.dynamics.coefficients(n)?;
    let (m, d) = (coeffs.state_dim(), coeffs.noise_dim());
    let grid = unit_grid(run.steps)?;
    let init = &cfg.dynamics.init;
    let f = &cfg.terminal;
    let g = cfg.cost.build(d)?;
    let template = cfg.template(kind).build(d, m, run.cells)?;
    let budget = DualBudget {
        validation_particles: run.particles,
        ..run.dual.clone()
    };
    let gap = dual_gap_report(f, &coeffs, &grid, init, &g, run.particles, &template, &budget, derive_seed(run.seed, 1))?;
    let ladder = LadderOptions {
        lsmc_particles: run.lsmc_particles,
        basis: run.basis(),
        domain_points: run.truncation_points,
        dual_budget: budget.clone(),
        template: template.clone(),
    };
    let lsmc = rho_truncated_sequence(
        f,
        &coeffs,
        &grid,
        init,
        &g,
        &[run.truncation],
        TruncationMethod::Lsmc,
        &ladder,
        derive_seed(run.seed, 2),
    )?;
    let lsmc = &lsmc.rungs[0].estimate;
    let reference = log_mgf_reference(&cfg.dynamics, f, n);

    let mut report = ExperimentReport::new(kind, "variational representation with quadratic penalty (log-moment identity)", cfg);
    let lsmc_label = format!("lsmc R={}", run.truncation);
    let mut rows = vec![
        ReportRow::new("primal", "log-mean-exp", gap.primal.value)
            .n(n)
            .particles(gap.primal.samples)
            .ci(gap.primal.ci),
        ReportRow::new("dual", "dual-lower-bound", gap.dual.value)
            .n(n)
            .particles(gap.dual.samples)
            .ci(gap.dual.ci),
        ReportRow::new(lsmc_label.clone(), "lsmc", lsmc.value)
            .n(n)
            .particles(lsmc.samples)
            .ci(lsmc.ci),
    ];
    if let Some(r) = reference {
        rows = rows.into_iter().map(|row| row.reference(r)).collect();
        rows.push(ReportRow::new("closed-form", "gaussian-moments", r).n(n));
    }
    report.rows = rows;
    if reference.is_some() {
        let tol = report.tolerance("reference");
        for label in ["primal", "dual", lsmc_label.as_str()] {
            report.check(
                &format!("{label} vs closed form"),
                Rule::Gap { row: label.to_string() },
                Comparison::AtMost,
                tol,
            );
        }
    } else {
        report.notes.push("no closed-form reference for this instance".into());
    }
    let tol = report.tolerance("dual_gap");
    report.check(
        "dual vs primal",
        Rule::Difference {
            a: "dual".into(),
            b: "primal".into(),
        },
        Comparison::AtMost,
        tol,
    );
    let multiple = report.tolerance("certificate_ci");
    report.check(
        "dual never above primal",
        Rule::Excess {
            lower: "dual".into(),
            upper: "primal".into(),
            multiple,
        },
        Comparison::AtMost,
        0.0,
    );
    let tol = report.tolerance("lsmc");
    report.check(
        "lsmc vs primal",
        Rule::Difference {
            a: lsmc_label.clone(),
            b: "primal".into(),
        },
        Comparison::AtMost,
        tol,
    );
    if let Some(res) = lsmc.residual {
        report.notes.push(format!("lsmc mean unexplained variance fraction {res:.3e}"));
    }
    Ok(ExperimentOutcome {
        report,
        artifacts: Vec::new(),
    })
}
