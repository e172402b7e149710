//! Zero-noise transport of many characteristics and the flow value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::action::{spread_of, start_points};
use crate::convex::CostFunction;
use crate::error::{invalid, Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::particles::{mean_of, CoefficientSet, ControlField, ControlMode, InitialCondition, TimeGrid};
use crate::rho::{TerminalFunctional, MAX_TEMPLATE_PARAMS};
use crate::rng::derive_seed;

/// Fewest characteristics accepted by [`flow_value_random_init`].
pub const MIN_CHARACTERISTICS: usize = 100;

const CHUNK: usize = 256;

/// `M` characteristics of the controlled continuity equation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowEnsemble {
    pub grid: TimeGrid,
    pub dim: usize,
    pub characteristics: usize,
    /// Row-major `(steps + 1) x M x dim`.
    pub states: Vec<f64>,
    /// Running cost accumulated along each characteristic.
    pub costs: Vec<f64>,
}

impl FlowEnsemble {
    pub fn states_at(&self, k: usize) -> &[f64] {
        let w = self.characteristics * self.dim;
        &self.states[k * w..(k + 1) * w]
    }

    pub fn final_states(&self) -> &[f64] {
        self.states_at(self.grid.steps())
    }
}

/// Derivative of the augmented state `(x, cost)` of every characteristic.
#[allow(clippy::too_many_arguments)]
fn field(
    coeffs: &CoefficientSet,
    control: &ControlField,
    g: &CostFunction,
    t: f64,
    cell: usize,
    xs: &[f64],
    dx: &mut [f64],
    dc: &mut [f64],
) {
    let m = coeffs.state_dim();
    let d = coeffs.noise_dim();
    let mean = mean_of(xs, m);
    xs.par_chunks(CHUNK * m)
        .zip(dx.par_chunks_mut(CHUNK * m))
        .zip(dc.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(c, ((xc, dxc), dcc))| {
            let mut sigma = vec![0.0; m * d];
            let mut phi = vec![0.0; d];
            for (j, (x, v)) in xc.chunks(m).zip(dxc.chunks_mut(m)).enumerate() {
                control.eval(cell, c * CHUNK + j, x, &mut phi);
                coeffs.drift_at(t, x, &mean, v);
                coeffs.diffusion_at(x, &mean, &mut sigma);
                for r in 0..m {
                    v[r] += (0..d).map(|q| sigma[r * d + q] * phi[q]).sum::<f64>();
                }
                dcc[j] = g.eval(t, &phi, x, &mean);
            }
        });
}

/// Moves the initial states `x0` (row-major) along the zero-noise dynamics
/// driven by `control`, with the law argument the empirical measure of the
/// characteristics. Joint RK4 on states and running costs.
pub fn transport(
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    x0: &[f64],
    control: &ControlField,
    g: &CostFunction,
) -> Result<FlowEnsemble> {
    let m = coeffs.state_dim();
    if x0.is_empty() || x0.len() % m != 0 {
        return Err(invalid("initial states do not fit the state dimension"));
    }
    let count = x0.len() / m;
    control.validate_for(grid, m, coeffs.noise_dim(), count)?;
    if g.dim() != coeffs.noise_dim() {
        return Err(invalid("penalty dimension does not match the noise dimension"));
    }
    let dt = grid.dt();
    let mut states = Vec::with_capacity((grid.steps() + 1) * x0.len());
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut costs = vec![0.0; count];
    let n = x.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut c1, mut c2, mut c3, mut c4) = (vec![0.0; count], vec![0.0; count], vec![0.0; count], vec![0.0; count]);
    let mut tmp = vec![0.0; n];
    for k in 0..grid.steps() {
        // coefficients are piecewise constant in time: freeze them on the step
        let t = grid.node(k) + 0.5 * dt;
        let cell = grid.cell_of_step(k, control.cells());
        field(coeffs, control, g, t, cell, &x, &mut k1, &mut c1);
        tmp.iter_mut().zip(&x).zip(&k1).for_each(|((o, a), b)| *o = a + 0.5 * dt * b);
        field(coeffs, control, g, t, cell, &tmp, &mut k2, &mut c2);
        tmp.iter_mut().zip(&x).zip(&k2).for_each(|((o, a), b)| *o = a + 0.5 * dt * b);
        field(coeffs, control, g, t, cell, &tmp, &mut k3, &mut c3);
        tmp.iter_mut().zip(&x).zip(&k3).for_each(|((o, a), b)| *o = a + dt * b);
        field(coeffs, control, g, t, cell, &tmp, &mut k4, &mut c4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for i in 0..count {
            costs[i] += dt / 6.0 * (c1[i] + 2.0 * c2[i] + 2.0 * c3[i] + c4[i]);
        }
        if x.iter().chain(&costs).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: k });
        }
        states.extend_from_slice(&x);
    }
    Ok(FlowEnsemble {
        grid: *grid,
        dim: m,
        characteristics: count,
        states,
        costs,
    })
}

/// `(1/M) sum_i [F(Phi_i(1), L(1)) - int g(t, phi(t, Phi_i), Phi_i, L) dt]`,
/// returned as `(total, payoff, cost)`.
pub fn flow_action(flow: &FlowEnsemble, f: &TerminalFunctional) -> (f64, f64, f64) {
    let end = flow.final_states();
    let mean = mean_of(end, flow.dim);
    let payoff = f.eval_cloud(end, flow.dim, &mean).iter().sum::<f64>() / flow.characteristics as f64;
    let cost = flow.costs.iter().sum::<f64>() / flow.characteristics as f64;
    (payoff - cost, payoff, cost)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowOptions {
    pub max_evaluations: usize,
    pub restarts: usize,
    pub start_spread: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 20_000,
            restarts: 5,
            start_spread: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowValue {
    pub value: f64,
    pub payoff: f64,
    pub cost: f64,
    pub control: ControlField,
    pub restart_values: Vec<f64>,
    pub restart_spread: f64,
    pub characteristics: usize,
}

/// Maximizes the averaged action of `characteristics` transported samples of
/// `init` over the parameters of `template`, a feedback or open-loop field.
#[allow(clippy::too_many_arguments)]
pub fn flow_value_random_init(
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    init: &InitialCondition,
    f: &TerminalFunctional,
    g: &CostFunction,
    template: &ControlField,
    characteristics: usize,
    opts: &FlowOptions,
    seed: u64,
) -> Result<FlowValue> {
    if characteristics < MIN_CHARACTERISTICS {
        return Err(invalid(format!("need at least {MIN_CHARACTERISTICS} characteristics")));
    }
    if matches!(template.mode(), ControlMode::PerSample { .. }) {
        return Err(invalid("per-sample controls are not fields of the state; use a feedback template"));
    }
    if template.param_count() > MAX_TEMPLATE_PARAMS {
        return Err(invalid(format!("template has more than {MAX_TEMPLATE_PARAMS} parameters")));
    }
    if opts.max_evaluations == 0 || opts.restarts == 0 {
        return Err(invalid("optimizer budget and restarts must be positive"));
    }
    let m = coeffs.state_dim();
    f.check_dim(m)?;
    let x0 = init.sample(m, characteristics, derive_seed(seed, 0))?;
    template.validate_for(grid, m, coeffs.noise_dim(), characteristics)?;
    let objective = |p: &[f64]| -> f64 {
        let Ok(c) = template.with_params(p) else {
            return f64::INFINITY;
        };
        match transport(coeffs, grid, &x0, &c, g) {
            Ok(flow) => -flow_action(&flow, f).0,
            Err(_) => f64::INFINITY,
        }
    };
    let nm = NelderMeadOptions {
        max_evaluations: opts.max_evaluations,
        ..Default::default()
    };
    let first = template.params();
    let starts = start_points(first.len(), opts.restarts, opts.start_spread, derive_seed(seed, 1), &first);
    let results: Vec<_> = starts.iter().map(|s| nelder_mead(objective, s, &nm)).collect();
    let restart_values: Vec<f64> = results.iter().map(|r| -r.value).collect();
    let best = results
        .into_iter()
        .filter(|r| r.value.is_finite())
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::Infeasible("every restart diverged".into()))?;
    let control = template.with_params(&best.x)?;
    let (value, payoff, cost) = flow_action(&transport(coeffs, grid, &x0, &control, g)?, f);
    Ok(FlowValue {
        value,
        payoff,
        cost,
        control,
        restart_spread: spread_of(&restart_values),
        restart_values,
        characteristics,
    })
}
