//! Vanishing-noise sweep of the dual value of `rho` against the zero-noise value.

use super::config::{ExperimentConfig, ExperimentKind, TemplateKind};
use super::fw::action_artifacts;
use super::report::{Comparison, ExperimentReport, ReportRow, Rule};
use super::{action_options, config_error, point_start, unit_grid, ExperimentOutcome};
use crate::error::Result;
use crate::limit::{flow_value_random_init, maximize_action, FlowOptions};
use crate::particles::{InitialCondition, TimeGrid};
use crate::rho::{rho_dual_lower, DualBudget};
use crate::rng::derive_seed;

pub fn run_vanish_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let kind = ExperimentKind::Vanish;
    if !cfg.dynamics.sigma_is_constant() {
        return Err(config_error("[dynamics] the vanish sweep needs a constant sigma"));
    }
    let run = &cfg.run;
    let ladder = cfg.ladder(kind);
    let grid = unit_grid(run.steps)?;
    let init = &cfg.dynamics.init;
    let f = &cfg.terminal;
    let base = cfg.dynamics.coefficients(1)?;
    let (m, d) = (base.state_dim(), base.noise_dim());
    let g = cfg.cost.build(d)?;
    let template = cfg.template(kind).build(d, m, run.cells)?;
    let start = point_start(init);

    let regime = match start {
        Some(_) => "vanishing noise, point start: zero-noise action maximum",
        None => "vanishing noise, random start: controlled continuity equation",
    };
    let mut report = ExperimentReport::new(kind, regime, cfg);
    let mut artifacts = Vec::new();
    let reference = match &start {
        Some(x0) => {
            let best = maximize_action(&base, &grid, x0, f, &g, &action_options(cfg, derive_seed(run.seed, 30)))?;
            report.rows.push(ReportRow::new("deterministic", "action-max", best.value.total));
            artifacts = action_artifacts("vanish", cfg, &base, x0, &best)?;
            best.value.total
        }
        None => {
            let flow_grid = TimeGrid::unit(run.flow_steps)?;
            let flow_template = TemplateKind::Affine.build(d, m, run.flow_cells)?;
            let opts = FlowOptions {
                max_evaluations: run.flow_evaluations,
                restarts: run.flow_restarts,
                start_spread: 0.5,
            };
            let flow = flow_value_random_init(
                &base,
                &flow_grid,
                init,
                f,
                &g,
                &flow_template,
                run.characteristics,
                &opts,
                derive_seed(run.seed, 40),
            )?;
            report
                .rows
                .push(ReportRow::new("flow", "characteristics", flow.value).particles(run.characteristics));
            let per_point = match init {
                InitialCondition::Discrete(points)
                    if cfg.dynamics.is_measure_free() && g.is_state_free() && f.is_measure_free() =>
                {
                    let mut total = 0.0;
                    for (i, x0) in points.iter().enumerate() {
                        let opts = action_options(cfg, derive_seed(run.seed, 50 + i as u64));
                        total += maximize_action(&base, &grid, x0, f, &g, &opts)?.value.total;
                    }
                    Some(total / points.len() as f64)
                }
                _ => None,
            };
            match per_point {
                Some(v) => {
                    report.rows.push(ReportRow::new("per-point average", "action-max", v));
                    let tol = report.tolerance("random_init");
                    report.check(
                        "flow vs per-point average",
                        Rule::Difference {
                            a: "flow".into(),
                            b: "per-point average".into(),
                        },
                        Comparison::AtMost,
                        tol,
                    );
                    v
                }
                None => flow.value,
            }
        }
    };

    let mut labels = Vec::new();
    for &n in &ladder {
        let coeffs = cfg.dynamics.coefficients(n)?;
        let particles = run.particles_for(n);
        let budget = DualBudget {
            validation_particles: particles,
            ..run.dual.clone()
        };
        let seed = derive_seed(run.seed, 100 + n as u64);
        let dual = rho_dual_lower(f, &coeffs, &grid, init, &g, &template, &budget, seed)?;
        let label = format!("n={n}");
        report.rows.push(
            ReportRow::new(label.clone(), "dual-lower-bound", dual.estimate.value)
                .n(n)
                .particles(particles)
                .ci(dual.estimate.ci)
                .reference(reference),
        );
        labels.push(label);
    }
    let multiple = report.tolerance("trend_ci");
    report.check(
        "gaps nonincreasing within interval",
        Rule::GapInversions {
            rows: labels.clone(),
            multiple,
        },
        Comparison::AtMost,
        labels.len() as f64,
    );
    let tol = report.tolerance("final_gap");
    report.check(
        "final gap",
        Rule::Gap {
            row: labels.last().expect("non-empty ladder").clone(),
        },
        Comparison::AtMost,
        tol,
    );
    Ok(ExperimentOutcome { report, artifacts })
}
