//! Quadratic rate function of a deterministic path.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ode::{ControlVector, DeterministicPath};
use crate::error::{invalid, Error, Result};
use crate::particles::{CoefficientSet, TimeGrid};

/// Smallest admissible squared singular value of `sigma` along the path.
pub const MIN_SINGULAR_SQ: f64 = 1e-10;

/// Relative residual above which a step is taken as unreachable.
pub const REACH_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateValue {
    /// `+inf` when the path leaves the range of `sigma`.
    pub value: f64,
    pub reachable: bool,
    /// Minimal-energy control, one cell per step; `None` when unreachable.
    pub control: Option<ControlVector>,
    /// First step whose residual exceeded the tolerance.
    pub blocked_step: Option<usize>,
}

/// `I(Phi) = inf { 1/2 int |phi|^2 : Phi' = b + sigma phi }`, discretized per
/// step with the forward difference and the left-point coefficients.
pub fn rate_function(coeffs: &CoefficientSet, grid: &TimeGrid, target: &DeterministicPath) -> Result<RateValue> {
    if target.grid != *grid {
        return Err(invalid("target path lives on a different time grid"));
    }
    let m = coeffs.state_dim();
    let d = coeffs.noise_dim();
    if target.dim != m {
        return Err(invalid(format!("target has dimension {}, expected {m}", target.dim)));
    }
    let dt = grid.dt();
    let mut sigma = vec![0.0; m * d];
    let mut drift = vec![0.0; m];
    let mut phis = Vec::with_capacity(grid.steps() * d);
    let mut energy = 0.0;
    for k in 0..grid.steps() {
        let (x, next) = (target.state(k), target.state(k + 1));
        coeffs.drift_at(grid.node(k), x, x, &mut drift);
        coeffs.diffusion_at(x, x, &mut sigma);
        let s = DMatrix::from_row_slice(m, d, &sigma);
        let v = DVector::from_iterator(m, (0..m).map(|i| (next[i] - x[i]) / dt - drift[i]));
        let svd = s.clone().svd(true, true);
        let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if smin * smin < MIN_SINGULAR_SQ {
            return Err(Error::EllipticityViolation {
                step: k,
                value: smin * smin,
                threshold: MIN_SINGULAR_SQ,
            });
        }
        let phi = svd
            .solve(&v, 0.0)
            .map_err(|e| invalid(format!("pseudo-inverse failed at step {k}: {e}")))?;
        let residual = (&s * &phi - &v).norm();
        if residual > REACH_TOLERANCE * (1.0 + v.norm()) {
            return Ok(RateValue {
                value: f64::INFINITY,
                reachable: false,
                control: None,
                blocked_step: Some(k),
            });
        }
        energy += phi.norm_squared() * dt;
        phis.extend(phi.iter());
    }
    Ok(RateValue {
        value: 0.5 * energy,
        reachable: true,
        control: Some(ControlVector::new(d, phis)?),
        blocked_step: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particles::{Diffusion, Drift};

    #[test]
    fn examples() {
        let grid = TimeGrid::unit(40).unwrap();
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let still = DeterministicPath::from_fn(grid, 1, |_| vec![0.4]).unwrap();
        assert_eq!(rate_function(&c, &grid, &still).unwrap().value, 0.0);
        let line = DeterministicPath::from_fn(grid, 1, |t| vec![0.4 + t]).unwrap();
        let r = rate_function(&c, &grid, &line).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
        assert!(r.control.unwrap().values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn direction_outside_range_is_infinite() {
        let grid = TimeGrid::unit(10).unwrap();
        let s = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let c = CoefficientSet::new(Drift::Zero, Diffusion::Constant(s), 1).unwrap();
        let along = DeterministicPath::from_fn(grid, 2, |t| vec![2.0 * t, 0.0]).unwrap();
        assert!((rate_function(&c, &grid, &along).unwrap().value - 2.0).abs() < 1e-12);
        let across = DeterministicPath::from_fn(grid, 2, |t| vec![t, t]).unwrap();
        let r = rate_function(&c, &grid, &across).unwrap();
        assert!(r.value.is_infinite() && !r.reachable);
        assert_eq!(r.blocked_step, Some(0));
    }

    #[test]
    fn degenerate_sigma_is_rejected() {
        let grid = TimeGrid::unit(10).unwrap();
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1e-7, 1).unwrap();
        let p = DeterministicPath::from_fn(grid, 1, |t| vec![t]).unwrap();
        assert!(matches!(rate_function(&c, &grid, &p), Err(Error::EllipticityViolation { step: 0, .. })));
    }
}
