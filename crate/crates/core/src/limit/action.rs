//! Maximization of the action over piecewise-constant controls.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ode::{action_value, integrate_ode, ActionValue, ControlVector};
use crate::convex::CostFunction;
use crate::error::{invalid, Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::particles::{CoefficientSet, TimeGrid};
use crate::rho::TerminalFunctional;
use crate::rng::{derive_seed, NormalStream};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionOptions {
    /// Number of constant pieces of the control.
    pub cells: usize,
    /// Objective evaluations per restart.
    pub max_evaluations: usize,
    pub restarts: usize,
    /// Standard deviation of the random starting points after the first,
    /// which is the zero control.
    pub start_spread: f64,
    pub seed: u64,
}

impl Default for ActionOptions {
    fn default() -> Self {
        Self {
            cells: 10,
            max_evaluations: 20_000,
            restarts: 5,
            start_spread: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionMaximum {
    pub value: ActionValue,
    pub control: ControlVector,
    /// Best total reached by each restart (`-inf` when it diverged).
    pub restart_values: Vec<f64>,
    /// `max - min` over the finite restart values.
    pub restart_spread: f64,
    pub evaluations: usize,
}

pub(crate) fn start_points(dim: usize, restarts: usize, spread: f64, seed: u64, first: &[f64]) -> Vec<Vec<f64>> {
    (0..restarts)
        .map(|r| {
            if r == 0 {
                first.to_vec()
            } else {
                let s = NormalStream::new(derive_seed(seed, r as u64));
                (0..dim).map(|j| first[j] + spread * s.normal(0, 0, j)).collect()
            }
        })
        .collect()
}

pub(crate) fn spread_of(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return f64::NAN;
    }
    let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// `sup_phi F(Phi(1)) - int g(t, phi, Phi) dt` over controls constant on
/// `opts.cells` equal cells, by Nelder-Mead from the zero control and from
/// `restarts - 1` random starts.
pub fn maximize_action(
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    x0: &[f64],
    f: &TerminalFunctional,
    g: &CostFunction,
    opts: &ActionOptions,
) -> Result<ActionMaximum> {
    if opts.max_evaluations == 0 || opts.restarts == 0 || opts.cells == 0 {
        return Err(invalid("optimizer budget, restarts and cells must be positive"));
    }
    if opts.cells > grid.steps() {
        return Err(invalid("more control cells than time steps"));
    }
    let d = coeffs.noise_dim();
    if g.dim() != d {
        return Err(invalid("penalty dimension does not match the noise dimension"));
    }
    f.check_dim(coeffs.state_dim())?;
    let dim = d * opts.cells;
    let objective = |p: &[f64]| -> f64 {
        let Ok(phi) = ControlVector::new(d, p.to_vec()) else {
            return f64::INFINITY;
        };
        match integrate_ode(coeffs, grid, x0, &phi).and_then(|path| action_value(&path, &phi, f, g)) {
            Ok(a) => -a.total,
            Err(_) => f64::INFINITY,
        }
    };
    let nm = NelderMeadOptions {
        max_evaluations: opts.max_evaluations,
        ..Default::default()
    };
    let starts = start_points(dim, opts.restarts, opts.start_spread, opts.seed, &vec![0.0; dim]);
    let results: Vec<_> = starts.par_iter().map(|x0| nelder_mead(objective, x0, &nm)).collect();
    let restart_values: Vec<f64> = results.iter().map(|r| -r.value).collect();
    let evaluations = results.iter().map(|r| r.evaluations).sum();
    let best = results
        .into_iter()
        .filter(|r| r.value.is_finite())
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::Infeasible("every restart diverged".into()))?;
    let control = ControlVector::new(d, best.x)?;
    let path = integrate_ode(coeffs, grid, x0, &control)?;
    let value = action_value(&path, &control, f, g)?;
    Ok(ActionMaximum {
        value,
        control,
        restart_spread: spread_of(&restart_values),
        restart_values,
        evaluations,
    })
}
