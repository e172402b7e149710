//! Small-noise sweep of `(1/n) log E exp(n F)` against the action maximum.

use super::config::{DriftSpec, ExperimentConfig, ExperimentKind};
use super::reference::{log_mgf_reference, mean_path};
use super::report::{Comparison, ExperimentReport, ReportRow, Rule};
use super::{action_options, config_error, point_start, unit_grid, ExperimentOutcome};
use crate::error::Result;
use crate::limit::{integrate_ode, maximize_action, ActionMaximum};
use crate::particles::{simulate_mckv_with, CoefficientSet, Drift, PiecewiseConstant, Retention};
use crate::rho::rho_log_mgf_mc;
use crate::rng::derive_seed;

/// Linear coefficients with the law argument frozen at the uncontrolled mean
/// path, as a measure-free drift on `cells` pieces.
pub fn frozen_law_coefficients(cfg: &ExperimentConfig, cells: usize) -> Result<Option<CoefficientSet>> {
    let DriftSpec::Linear { alpha, beta, gamma } = &cfg.dynamics.drift else {
        return Ok(None);
    };
    if gamma.iter().all(|&g| g == 0.0) {
        return Ok(None);
    }
    let mids: Vec<f64> = (0..cells).map(|c| (c as f64 + 0.5) / cells as f64).collect();
    let Some(path) = mean_path(&cfg.dynamics, &mids) else {
        return Ok(None);
    };
    let (a, b, g) = (
        PiecewiseConstant::new(alpha.clone())?,
        PiecewiseConstant::new(beta.clone())?,
        PiecewiseConstant::new(gamma.clone())?,
    );
    let m = cfg.dynamics.dim;
    let shifted = (0..m)
        .map(|i| PiecewiseConstant::new(mids.iter().zip(&path).map(|(&t, mp)| a.at(t) + g.at(t) * mp[i]).collect()))
        .collect::<Result<Vec<_>>>()?;
    let base = cfg.dynamics.coefficients(1)?;
    let drift = Drift::Linear {
        alpha: shifted,
        beta: b,
        gamma: PiecewiseConstant::constant(0.0),
    };
    Ok(Some(CoefficientSet::new(drift, base.diffusion().clone(), 1)?))
}

pub(crate) fn action_artifacts(name: &str, cfg: &ExperimentConfig, coeffs: &CoefficientSet, x0: &[f64], best: &ActionMaximum) -> Result<Vec<(String, String)>> {
    let grid = unit_grid(cfg.run.steps)?;
    let mut control = Vec::new();
    best.control.write_csv(0.0, &mut control)?;
    let mut path = Vec::new();
    integrate_ode(coeffs, &grid, x0, &best.control)?.write_csv(&mut path)?;
    Ok(vec![
        (format!("{name}_control.csv"), String::from_utf8(control).expect("ascii csv")),
        (format!("{name}_path.csv"), String::from_utf8(path).expect("ascii csv")),
    ])
}

pub fn run_fw_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let kind = ExperimentKind::Fw;
    if !cfg.cost.is_standard_quadratic() {
        return Err(config_error("[cost] the fw sweep needs kind = \"quadratic\", scale = 1 and no offset"));
    }
    let Some(x0) = point_start(&cfg.dynamics.init) else {
        return Err(config_error("[dynamics] the fw sweep needs a deterministic initial state (init = \"point\")"));
    };
    let run = &cfg.run;
    let ladder = cfg.ladder(kind);
    let grid = unit_grid(run.steps)?;
    let f = &cfg.terminal;
    let base = cfg.dynamics.coefficients(1)?;
    let g = cfg.cost.build(base.noise_dim())?;
    let opts = action_options(cfg, derive_seed(run.seed, 30));
    let best = maximize_action(&base, &grid, &x0, f, &g, &opts)?;
    let reference = best.value.total;

    let mut report = ExperimentReport::new(kind, "small-noise limit of the log-moment functional (point start)", cfg);
    report.rows.push(ReportRow::new("deterministic", "action-max", reference));
    let frozen = match frozen_law_coefficients(cfg, run.steps)? {
        Some(c) => {
            let v = maximize_action(&c, &grid, &x0, f, &g, &opts)?.value.total;
            report.rows.push(ReportRow::new("deterministic frozen law", "action-max", v));
            report.notes.push(format!(
                "mean-field drift: the limit with the law frozen at the uncontrolled flow is {v:.6}, \
                 the point-mass limit used as reference is {reference:.6}"
            ));
            Some(v)
        }
        None => None,
    };
    if best.restart_spread > 1e-6 {
        report
            .notes
            .push(format!("action restarts spread {:.3e}: possible local optima", best.restart_spread));
    }
    let mut labels = Vec::new();
    for &n in &ladder {
        let coeffs = cfg.dynamics.coefficients(n)?;
        let particles = run.particles_for(n);
        let ens = simulate_mckv_with(&coeffs, &grid, &cfg.dynamics.init, particles, None, derive_seed(run.seed, n as u64), Retention::Final)?;
        let est = rho_log_mgf_mc(f, &ens, n)?;
        let label = format!("n={n}");
        report.rows.push(
            ReportRow::new(label.clone(), "log-mean-exp", est.value)
                .n(n)
                .particles(particles)
                .ci(est.ci)
                .reference(reference),
        );
        labels.push(label);
        if let Some(exact) = log_mgf_reference(&cfg.dynamics, f, n) {
            report
                .rows
                .push(ReportRow::new(format!("closed-form n={n}"), "gaussian-moments", exact).n(n).reference(reference));
        }
        if let Some(v) = frozen {
            report
                .rows
                .push(ReportRow::new(format!("n={n} vs frozen law"), "log-mean-exp", est.value).n(n).ci(est.ci).reference(v));
        }
    }
    let tol = report.tolerance("final_gap");
    report.check(
        "final gap",
        Rule::Gap {
            row: labels.last().expect("non-empty ladder").clone(),
        },
        Comparison::AtMost,
        tol,
    );
    let allowed = report.tolerance("inversions");
    report.check(
        "gaps nonincreasing",
        Rule::GapInversions {
            rows: labels,
            multiple: 1.0,
        },
        Comparison::AtMost,
        allowed,
    );
    let artifacts = action_artifacts("fw", cfg, &base, &x0, &best)?;
    Ok(ExperimentOutcome { report, artifacts })
}
