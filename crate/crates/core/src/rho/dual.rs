//! Lower bounds on `rho` from admissible controls.

use serde::{Deserialize, Serialize};

use super::estimate::{mean_ci, Method, RhoEstimate};
use super::TerminalFunctional;
use crate::convex::CostFunction;
use crate::error::{invalid, Error, Result};
use crate::optim::{bfgs_fd, BfgsOptions};
use crate::particles::{
    mean_of, CoefficientSet, ControlField, ControlMode, InitialCondition, Noise, NoiseTable, Retention, Simulation,
    TimeGrid,
};
use crate::rng::{derive_seed, NormalStream};

/// Templates with more free parameters than this are rejected.
pub const MAX_TEMPLATE_PARAMS: usize = 400;

/// Work limits for [`rho_dual_lower`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualBudget {
    /// Particles in the frozen training sample.
    pub train_particles: usize,
    /// Time steps used while training; `None` picks a multiple of the cell
    /// count of at least 64.
    pub train_steps: Option<usize>,
    /// Particles in the independent sample that certifies the value.
    pub validation_particles: usize,
    pub starts: usize,
    /// Standard deviation of the random perturbation for starts after the first.
    pub start_spread: f64,
    pub max_iterations: usize,
    pub max_evaluations: usize,
}

impl Default for DualBudget {
    fn default() -> Self {
        Self {
            train_particles: 2048,
            train_steps: None,
            validation_particles: 200_000,
            starts: 5,
            start_spread: 0.5,
            max_iterations: 40,
            max_evaluations: 3000,
        }
    }
}

/// Result of [`rho_dual_lower`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualResult {
    pub estimate: RhoEstimate,
    pub control: ControlField,
    /// Objective of the chosen control on the training sample.
    pub train_value: f64,
    /// Best training objective reached from each start.
    pub start_values: Vec<f64>,
}

/// Maximizes `J(theta) = E[F(X(1), L(1)) - int g(t, q, X, L) dt]` over the
/// parameters of `template` and certifies the maximizer on a fresh sample.
///
/// Training uses a frozen noise sample (common random numbers), so `J` is a
/// smooth function of the parameters and is ascended by quasi-Newton steps
/// with central-difference gradients from several starts. The reported value
/// is `J` of the chosen control re-estimated on independent noise: every
/// admissible control gives a lower bound on `rho`, so the estimate is
/// unbiased for a lower bound even though the control was fitted.
#[allow(clippy::too_many_arguments)]
pub fn rho_dual_lower(
    f: &TerminalFunctional,
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    init: &InitialCondition,
    g: &CostFunction,
    template: &ControlField,
    budget: &DualBudget,
    seed: u64,
) -> Result<DualResult> {
    let m = coeffs.state_dim();
    let d = coeffs.noise_dim();
    f.check_dim(m)?;
    if g.dim() != d {
        return Err(invalid("penalty dimension does not match the noise dimension"));
    }
    for t in [0.0, 0.5, 0.999] {
        let g0 = g.eval_z(t, &vec![0.0; d]);
        if g0.abs() > 1e-9 {
            return Err(invalid(format!("penalty must vanish at q = 0, got {g0}")));
        }
    }
    if matches!(template.mode(), ControlMode::PerSample { .. }) {
        return Err(Error::InfeasibleTemplate(
            "per-sample controls cannot be evaluated on an independent validation sample".into(),
        ));
    }
    if template.param_count() > MAX_TEMPLATE_PARAMS {
        return Err(Error::InfeasibleTemplate(format!(
            "{} parameters exceed the finite-difference limit of {MAX_TEMPLATE_PARAMS}",
            template.param_count()
        )));
    }
    if budget.train_particles == 0 || budget.validation_particles < 2 || budget.starts == 0 {
        return Err(invalid("dual budget needs training particles, validation particles and starts"));
    }
    template.validate_for(grid, m, d, budget.validation_particles)?;

    let cells = template.cells();
    let train_steps = budget
        .train_steps
        .unwrap_or_else(|| cells * 64usize.div_ceil(cells))
        .max(cells);
    let train_grid = TimeGrid::new(grid.start(), train_steps)?;
    let train_seed = derive_seed(seed, 1);
    let x0 = init.sample(m, budget.train_particles, train_seed)?;
    let table = NoiseTable::draw(train_seed, budget.train_particles, train_steps, d);

    let objective = |theta: &[f64]| -> f64 {
        let Ok(control) = template.with_params(theta) else {
            return f64::NEG_INFINITY;
        };
        let sim = Simulation {
            coeffs,
            grid: train_grid,
            control: Some(&control),
            noise: Noise::Table(&table),
            penalty: Some(g),
        };
        match sim.run(x0.clone(), Retention::Final) {
            Ok(run) => payoff(f, &run.states[0], m, run.penalty.as_deref().unwrap_or(&[]))
                .iter()
                .sum::<f64>()
                / budget.train_particles as f64,
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let opts = BfgsOptions {
        max_iterations: budget.max_iterations,
        max_evaluations: budget.max_evaluations,
        ..BfgsOptions::default()
    };
    let base = template.params();
    let perturb = NormalStream::new(derive_seed(seed, 3));
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut start_values = Vec::with_capacity(budget.starts);
    let mut trace = Vec::new();
    let mut evaluations = 0;
    for s in 0..budget.starts {
        let x0: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if s == 0 {
                    *v
                } else {
                    v + budget.start_spread * perturb.normal(s as u64, 0, i)
                }
            })
            .collect();
        let res = bfgs_fd(|th| -objective(th), &x0, &opts);
        trace.extend(res.trace.iter().map(|&(it, v)| (evaluations + it, -v)));
        evaluations += res.evaluations;
        let value = -res.value;
        start_values.push(value);
        if value.is_finite() && best.as_ref().is_none_or(|b| value > b.1) {
            best = Some((res.x, value));
        }
    }
    let Some((theta, train_value)) = best else {
        return Err(Error::InfeasibleTemplate(
            "the objective was not finite from any start".into(),
        ));
    };
    let control = template.with_params(&theta)?;
    let (value, ci) = evaluate_control(f, coeffs, grid, init, g, &control, budget.validation_particles, derive_seed(seed, 2))?;
    Ok(DualResult {
        estimate: RhoEstimate {
            value,
            ci,
            method: Method::DualLower,
            n: coeffs.noise_index(),
            samples: budget.validation_particles,
            lower_bound: true,
            residual: None,
            trace,
        },
        control,
        train_value,
        start_values,
    })
}

/// Monte Carlo estimate of `J` for a fixed control: mean and 95% half-width.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_control(
    f: &TerminalFunctional,
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    init: &InitialCondition,
    g: &CostFunction,
    control: &ControlField,
    particles: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let m = coeffs.state_dim();
    let x0 = init.sample(m, particles, seed)?;
    let run = Simulation {
        coeffs,
        grid: *grid,
        control: Some(control),
        noise: Noise::Counter(NormalStream::new(seed)),
        penalty: Some(g),
    }
    .run(x0, Retention::Final)?;
    let values = payoff(f, &run.states[0], m, run.penalty.as_deref().unwrap_or(&[]));
    Ok(mean_ci(&values))
}

/// Pathwise `F(X_i(1), L(1)) - int g dt`.
fn payoff(f: &TerminalFunctional, states: &[f64], m: usize, penalty: &[f64]) -> Vec<f64> {
    let mean = mean_of(states, m);
    states
        .chunks_exact(m)
        .zip(penalty)
        .map(|(x, c)| f.eval(x, &mean) - c)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_budget() -> DualBudget {
        DualBudget {
            train_particles: 512,
            validation_particles: 20_000,
            starts: 2,
            ..DualBudget::default()
        }
    }

    #[test]
    fn constant_payoff_needs_no_control() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let grid = TimeGrid::unit(32).unwrap();
        let g = CostFunction::quadratic(1, 1.0).unwrap();
        let t = ControlField::zero_open_loop(1, 4).unwrap();
        let r = rho_dual_lower(
            &TerminalFunctional::constant(0.7),
            &c,
            &grid,
            &InitialCondition::Point(vec![0.0]),
            &g,
            &t,
            &small_budget(),
            1,
        )
        .unwrap();
        assert_eq!(r.estimate.value, 0.7);
        assert!(r.control.params().iter().all(|&v| v == 0.0));
        assert!(r.estimate.lower_bound);
    }

    #[test]
    fn linear_payoff_recovers_unit_control() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let grid = TimeGrid::unit(32).unwrap();
        let g = CostFunction::quadratic(1, 1.0).unwrap();
        let t = ControlField::zero_open_loop(1, 4).unwrap();
        let r = rho_dual_lower(
            &TerminalFunctional::linear(1.0),
            &c,
            &grid,
            &InitialCondition::Point(vec![0.0]),
            &g,
            &t,
            &small_budget(),
            2,
        )
        .unwrap();
        assert!((r.estimate.value - 0.5).abs() < 3.0 * r.estimate.ci + 1e-3, "{:?}", r.estimate);
        for q in r.control.params() {
            assert!((q - 1.0).abs() < 1e-3, "{q}");
        }
    }

    #[test]
    fn zero_cap_gives_uncontrolled_mean() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let grid = TimeGrid::unit(16).unwrap();
        let g = CostFunction::quadratic(1, 1.0).unwrap();
        let t = ControlField::zero_open_loop(1, 4).unwrap().with_cap(0.0).unwrap();
        let r = rho_dual_lower(
            &TerminalFunctional::linear(1.0),
            &c,
            &grid,
            &InitialCondition::Point(vec![0.0]),
            &g,
            &t,
            &small_budget(),
            3,
        )
        .unwrap();
        assert!(r.estimate.value.abs() < 3.0 * r.estimate.ci, "{:?}", r.estimate);
    }

    #[test]
    fn per_sample_template_is_rejected() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let grid = TimeGrid::unit(16).unwrap();
        let g = CostFunction::quadratic(1, 1.0).unwrap();
        let t = ControlField::per_sample(1, 1, 10, vec![0.0; 10]).unwrap();
        let err = rho_dual_lower(
            &TerminalFunctional::linear(1.0),
            &c,
            &grid,
            &InitialCondition::Point(vec![0.0]),
            &g,
            &t,
            &small_budget(),
            3,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InfeasibleTemplate(_)));
    }
}
