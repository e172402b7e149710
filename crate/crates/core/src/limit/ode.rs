//! Controlled ODEs and the action functional.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::convex::CostFunction;
use crate::error::{invalid, Error, Result};
use crate::particles::{CoefficientSet, TimeGrid};
use crate::rho::TerminalFunctional;

/// Open-loop control: one vector in `R^d` per time cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVector {
    dim: usize,
    values: Vec<f64>,
}

impl ControlVector {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return Err(invalid("control vector needs a whole number of cells"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("control vector must be finite"));
        }
        Ok(Self { dim, values })
    }

    pub fn zeros(dim: usize, cells: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; dim * cells],
        }
    }

    pub fn constant(value: &[f64], cells: usize) -> Self {
        Self {
            dim: value.len(),
            values: value.repeat(cells),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        &self.values[c * self.dim..(c + 1) * self.dim]
    }

    /// `sum_c |phi_c|^2 * cell length` on `[start, 1]`.
    pub fn energy(&self, start: f64) -> f64 {
        let h = (1.0 - start) / self.cells() as f64;
        self.values.iter().map(|v| v * v).sum::<f64>() * h
    }

    /// CSV with columns `time,phi_1..phi_d`, one row per cell start.
    pub fn write_csv<W: Write>(&self, start: f64, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|c| format!("phi_{c}")).collect();
        writeln!(out, "time,{}", header.join(","))?;
        let h = (1.0 - start) / self.cells() as f64;
        for c in 0..self.cells() {
            let vals: Vec<String> = self.cell(c).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{}", start + c as f64 * h, vals.join(","))?;
        }
        Ok(())
    }
}

/// States `Phi_k` at the nodes of a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicPath {
    pub grid: TimeGrid,
    pub dim: usize,
    /// Row-major, `(steps + 1) x dim`.
    pub states: Vec<f64>,
    pub integrator: String,
}

impl DeterministicPath {
    /// Path given by its node values, e.g. a target for the rate function.
    pub fn from_fn(grid: TimeGrid, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut states = Vec::with_capacity((grid.steps() + 1) * dim);
        for t in grid.nodes() {
            let x = f(t);
            if x.len() != dim {
                return Err(invalid("path function returned the wrong dimension"));
            }
            states.extend(x);
        }
        Ok(Self {
            grid,
            dim,
            states,
            integrator: "given".into(),
        })
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    /// CSV with columns `time,x_1..x_m`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|c| format!("x_{c}")).collect();
        writeln!(out, "time,{}", header.join(","))?;
        for k in 0..=self.grid.steps() {
            let vals: Vec<String> = self.state(k).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{}", self.grid.node(k), vals.join(","))?;
        }
        Ok(())
    }
}

/// `F(Phi(1)) - int g`, split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionValue {
    pub payoff: f64,
    pub cost: f64,
    pub total: f64,
}

/// `b(t, x, delta_x) + sigma(x, delta_x) phi`
fn velocity(coeffs: &CoefficientSet, t: f64, x: &[f64], phi: &[f64], sigma: &mut [f64], out: &mut [f64]) {
    coeffs.drift_at(t, x, x, out);
    coeffs.diffusion_at(x, x, sigma);
    let d = phi.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o += (0..d).map(|c| sigma[r * d + c] * phi[c]).sum::<f64>();
    }
}

/// RK4 for `Phi' = b(t, Phi, delta_Phi) + sigma(t, Phi, delta_Phi) phi(t)` with
/// `phi` constant on each cell; step `k` uses the cell containing it.
pub fn integrate_ode(
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    x0: &[f64],
    control: &ControlVector,
) -> Result<DeterministicPath> {
    let m = coeffs.state_dim();
    let d = coeffs.noise_dim();
    if x0.len() != m {
        return Err(invalid(format!("initial state has dimension {}, expected {m}", x0.len())));
    }
    if control.dim() != d {
        return Err(invalid(format!("control dimension {} does not match noise dimension {d}", control.dim())));
    }
    if control.cells() > grid.steps() {
        return Err(invalid("control has more cells than the grid has steps"));
    }
    let dt = grid.dt();
    let mut states = Vec::with_capacity((grid.steps() + 1) * m);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut sigma = vec![0.0; m * d];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut tmp = vec![0.0; m];
    for k in 0..grid.steps() {
        // coefficients are piecewise constant in time: freeze them on the step
        let t = grid.node(k) + 0.5 * dt;
        let phi = control.cell(grid.cell_of_step(k, control.cells()));
        velocity(coeffs, t, &x, phi, &mut sigma, &mut k1);
        for i in 0..m {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        velocity(coeffs, t, &tmp, phi, &mut sigma, &mut k2);
        for i in 0..m {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        velocity(coeffs, t, &tmp, phi, &mut sigma, &mut k3);
        for i in 0..m {
            tmp[i] = x[i] + dt * k3[i];
        }
        velocity(coeffs, t, &tmp, phi, &mut sigma, &mut k4);
        for i in 0..m {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: k });
        }
        states.extend_from_slice(&x);
    }
    Ok(DeterministicPath {
        grid: *grid,
        dim: m,
        states,
        integrator: "rk4".into(),
    })
}

/// `F(Phi(1), delta_Phi(1)) - int g(t, phi(t), Phi(t), delta_Phi(t)) dt`.
///
/// The control part of `g` is integrated exactly per step (evaluated at the
/// step midpoint, where the time weight is constant for aligned grids); a
/// state-dependent offset uses the trapezoidal rule.
pub fn action_value(
    path: &DeterministicPath,
    control: &ControlVector,
    f: &TerminalFunctional,
    g: &CostFunction,
) -> Result<ActionValue> {
    if g.dim() != control.dim() {
        return Err(invalid("penalty dimension does not match the control"));
    }
    if control.cells() > path.grid.steps() {
        return Err(invalid("control has more cells than the path has steps"));
    }
    f.check_dim(path.dim)?;
    let dt = path.grid.dt();
    let mut cost = 0.0;
    for k in 0..path.grid.steps() {
        let phi = control.cell(path.grid.cell_of_step(k, control.cells()));
        let mid = path.grid.node(k) + 0.5 * dt;
        let mut c = g.eval_z(mid, phi);
        if let Some(o) = g.offset() {
            let (a, b) = (path.state(k), path.state(k + 1));
            c += 0.5 * (o.eval(a, a) + o.eval(b, b));
        }
        cost += c * dt;
    }
    let end = path.terminal();
    let payoff = f.eval(end, end);
    Ok(ActionValue {
        payoff,
        cost,
        total: payoff - cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ode_examples() {
        let grid = TimeGrid::unit(100).unwrap();
        let still = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let p = integrate_ode(&still, &grid, &[0.3], &ControlVector::zeros(1, 10)).unwrap();
        assert!(p.states.iter().all(|&v| v == 0.3));
        let p = integrate_ode(&still, &grid, &[0.0], &ControlVector::constant(&[1.0], 10)).unwrap();
        assert!((p.terminal()[0] - 1.0).abs() < 1e-10);
        let decay = CoefficientSet::linear_1d(0.0, -1.0, 0.0, 1.0, 1).unwrap();
        let p = integrate_ode(&decay, &grid, &[1.0], &ControlVector::zeros(1, 1)).unwrap();
        assert!((p.terminal()[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn action_examples() {
        let grid = TimeGrid::unit(60).unwrap();
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let g = CostFunction::quadratic(1, 1.0).unwrap();
        let f = TerminalFunctional::neg_squared_distance(1.0, vec![1.0]);
        let zero = ControlVector::zeros(1, 6);
        let a = action_value(&integrate_ode(&c, &grid, &[0.0], &zero).unwrap(), &zero, &f, &g).unwrap();
        assert_eq!(a.cost, 0.0);
        assert_eq!(a.total, -1.0);
        let phi = ControlVector::constant(&[2.0 / 3.0], 6);
        let a = action_value(&integrate_ode(&c, &grid, &[0.0], &phi).unwrap(), &phi, &f, &g).unwrap();
        assert!((a.cost - 2.0 / 9.0).abs() < 1e-12);
        assert!((a.total + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cost_is_refinement_invariant() {
        let c = CoefficientSet::linear_1d(0.0, -0.5, 0.0, 1.0, 1).unwrap();
        let g = CostFunction::quadratic(1, 1.0).unwrap();
        let f = TerminalFunctional::constant(0.0);
        let phi = ControlVector::new(1, vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        let costs: Vec<f64> = [4, 40, 400]
            .iter()
            .map(|&k| {
                let grid = TimeGrid::unit(k).unwrap();
                action_value(&integrate_ode(&c, &grid, &[0.0], &phi).unwrap(), &phi, &f, &g).unwrap().cost
            })
            .collect();
        assert!((costs[0] - costs[1]).abs() < 1e-14 && (costs[1] - costs[2]).abs() < 1e-13);
    }

    #[test]
    fn overflow_is_reported() {
        let c = CoefficientSet::linear_1d(0.0, 1e300, 0.0, 0.0, 1).unwrap();
        let grid = TimeGrid::unit(10).unwrap();
        let err = integrate_ode(&c, &grid, &[1.0], &ControlVector::zeros(1, 1)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { .. }));
    }
}
