//! Control parameterizations for the dual side.

use serde::{Deserialize, Serialize};

use super::TimeGrid;
use crate::error::{invalid, Result};

/// Markovian feedback maps, one parameter block per time cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeedbackMap {
    /// `q = a_c + B_c x` with `a_c` in `R^d` and `B_c` a `d x m` matrix (row-major).
    Affine { offsets: Vec<f64>, gains: Vec<f64> },
    /// `q = a_c + sum_j w_{c,j} exp(-|x - y_j|^2 / (2 h^2))` with fixed centers `y_j`.
    Radial {
        centers: Vec<Vec<f64>>,
        width: f64,
        offsets: Vec<f64>,
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlMode {
    /// One vector per cell; `values` has `cells * d` entries.
    OpenLoop { values: Vec<f64> },
    Feedback(FeedbackMap),
    /// One vector per particle and cell; `particles * cells * d` entries.
    PerSample { particles: usize, values: Vec<f64> },
}

/// A control `q(t, x)` that is piecewise constant in time over `cells`
/// equal cells of the simulation interval, optionally projected onto the
/// ball of radius `cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    noise_dim: usize,
    state_dim: usize,
    cells: usize,
    mode: ControlMode,
    cap: Option<f64>,
}

impl ControlField {
    pub fn open_loop(noise_dim: usize, cells: usize, values: Vec<f64>) -> Result<Self> {
        Self::build(noise_dim, 0, cells, ControlMode::OpenLoop { values })
    }

    pub fn zero_open_loop(noise_dim: usize, cells: usize) -> Result<Self> {
        Self::open_loop(noise_dim, cells, vec![0.0; noise_dim * cells])
    }

    pub fn affine(noise_dim: usize, state_dim: usize, cells: usize, offsets: Vec<f64>, gains: Vec<f64>) -> Result<Self> {
        Self::build(noise_dim, state_dim, cells, ControlMode::Feedback(FeedbackMap::Affine { offsets, gains }))
    }

    pub fn zero_affine(noise_dim: usize, state_dim: usize, cells: usize) -> Result<Self> {
        Self::affine(
            noise_dim,
            state_dim,
            cells,
            vec![0.0; cells * noise_dim],
            vec![0.0; cells * noise_dim * state_dim],
        )
    }

    pub fn radial(noise_dim: usize, cells: usize, centers: Vec<Vec<f64>>, width: f64) -> Result<Self> {
        let state_dim = centers.first().map_or(0, |c| c.len());
        if !(width > 0.0) {
            return Err(invalid("radial width must be positive"));
        }
        let k = centers.len();
        Self::build(
            noise_dim,
            state_dim,
            cells,
            ControlMode::Feedback(FeedbackMap::Radial {
                centers,
                width,
                offsets: vec![0.0; cells * noise_dim],
                weights: vec![0.0; cells * k * noise_dim],
            }),
        )
    }

    pub fn per_sample(noise_dim: usize, cells: usize, particles: usize, values: Vec<f64>) -> Result<Self> {
        Self::build(noise_dim, 0, cells, ControlMode::PerSample { particles, values })
    }

    fn build(noise_dim: usize, state_dim: usize, cells: usize, mode: ControlMode) -> Result<Self> {
        if noise_dim == 0 || cells == 0 {
            return Err(invalid("control needs at least one dimension and one cell"));
        }
        let expected = match &mode {
            ControlMode::OpenLoop { values } => (values.len(), cells * noise_dim),
            ControlMode::Feedback(FeedbackMap::Affine { offsets, gains }) => {
                if state_dim == 0 {
                    return Err(invalid("affine feedback needs a state dimension"));
                }
                if gains.len() != cells * noise_dim * state_dim {
                    return Err(invalid(format!(
                        "affine feedback has {} gains, expected {}",
                        gains.len(),
                        cells * noise_dim * state_dim
                    )));
                }
                (offsets.len(), cells * noise_dim)
            }
            ControlMode::Feedback(FeedbackMap::Radial { centers, .. }) => {
                if centers.is_empty() || centers.iter().any(|c| c.len() != state_dim) {
                    return Err(invalid("radial centers must be non-empty with a common dimension"));
                }
                (0, 0)
            }
            ControlMode::PerSample { particles, values } => (values.len(), particles * cells * noise_dim),
        };
        if expected.0 != expected.1 {
            return Err(invalid(format!(
                "control has {} values, expected {}",
                expected.0, expected.1
            )));
        }
        let out = Self {
            noise_dim,
            state_dim,
            cells,
            mode,
            cap: None,
        };
        if out.params().iter().any(|v| !v.is_finite()) {
            return Err(invalid("control values must be finite"));
        }
        Ok(out)
    }

    /// Projects every control value onto the ball of radius `cap`.
    pub fn with_cap(mut self, cap: f64) -> Result<Self> {
        if !(cap >= 0.0) {
            return Err(invalid("control cap must be non-negative"));
        }
        self.cap = Some(cap);
        Ok(self)
    }

    pub fn cap(&self) -> Option<f64> {
        self.cap
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn mode(&self) -> &ControlMode {
        &self.mode
    }

    pub fn is_feedback(&self) -> bool {
        matches!(self.mode, ControlMode::Feedback(_))
    }

    /// Checks that the field fits a simulation on `grid` with `particles` particles.
    pub fn validate_for(&self, grid: &TimeGrid, state_dim: usize, noise_dim: usize, particles: usize) -> Result<()> {
        if self.cells > grid.steps() {
            return Err(invalid(format!(
                "control has {} cells but the grid only {} steps",
                self.cells,
                grid.steps()
            )));
        }
        if self.noise_dim != noise_dim {
            return Err(invalid(format!(
                "control dimension {} does not match noise dimension {noise_dim}",
                self.noise_dim
            )));
        }
        if self.is_feedback() && self.state_dim != state_dim {
            return Err(invalid(format!(
                "feedback expects state dimension {}, dynamics have {state_dim}",
                self.state_dim
            )));
        }
        if let ControlMode::PerSample { particles: p, .. } = &self.mode {
            if *p != particles {
                return Err(invalid(format!("per-sample control built for {p} particles, got {particles}")));
            }
        }
        Ok(())
    }

    /// Writes `q` for `cell`, `particle` at state `x` into `out`.
    #[inline]
    pub fn eval(&self, cell: usize, particle: usize, x: &[f64], out: &mut [f64]) {
        let d = self.noise_dim;
        match &self.mode {
            ControlMode::OpenLoop { values } => out.copy_from_slice(&values[cell * d..(cell + 1) * d]),
            ControlMode::PerSample { values, .. } => {
                let base = (particle * self.cells + cell) * d;
                out.copy_from_slice(&values[base..base + d]);
            }
            ControlMode::Feedback(FeedbackMap::Affine { offsets, gains }) => {
                let m = self.state_dim;
                for r in 0..d {
                    let g = &gains[(cell * d + r) * m..(cell * d + r + 1) * m];
                    out[r] = offsets[cell * d + r] + g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            ControlMode::Feedback(FeedbackMap::Radial {
                centers,
                width,
                offsets,
                weights,
            }) => {
                out.copy_from_slice(&offsets[cell * d..(cell + 1) * d]);
                let k = centers.len();
                let inv = 1.0 / (2.0 * width * width);
                for (j, c) in centers.iter().enumerate() {
                    let r2: f64 = c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                    let phi = (-r2 * inv).exp();
                    let w = &weights[(cell * k + j) * d..(cell * k + j + 1) * d];
                    for r in 0..d {
                        out[r] += w[r] * phi;
                    }
                }
            }
        }
        if let Some(cap) = self.cap {
            let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > cap {
                let s = cap / norm;
                out.iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    /// Flattened free parameters.
    pub fn params(&self) -> Vec<f64> {
        match &self.mode {
            ControlMode::OpenLoop { values } | ControlMode::PerSample { values, .. } => values.clone(),
            ControlMode::Feedback(FeedbackMap::Affine { offsets, gains }) => {
                offsets.iter().chain(gains).cloned().collect()
            }
            ControlMode::Feedback(FeedbackMap::Radial { offsets, weights, .. }) => {
                offsets.iter().chain(weights).cloned().collect()
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match &self.mode {
            ControlMode::OpenLoop { values } | ControlMode::PerSample { values, .. } => values.len(),
            ControlMode::Feedback(FeedbackMap::Affine { offsets, gains }) => offsets.len() + gains.len(),
            ControlMode::Feedback(FeedbackMap::Radial { offsets, weights, .. }) => offsets.len() + weights.len(),
        }
    }

    /// Copy of the field with its parameters replaced.
    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.param_count() {
            return Err(invalid(format!(
                "expected {} control parameters, got {}",
                self.param_count(),
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(invalid("control parameters must be finite"));
        }
        let mut out = self.clone();
        match &mut out.mode {
            ControlMode::OpenLoop { values } | ControlMode::PerSample { values, .. } => values.copy_from_slice(p),
            ControlMode::Feedback(FeedbackMap::Affine { offsets, gains }) => {
                let (a, b) = p.split_at(offsets.len());
                offsets.copy_from_slice(a);
                gains.copy_from_slice(b);
            }
            ControlMode::Feedback(FeedbackMap::Radial { offsets, weights, .. }) => {
                let (a, b) = p.split_at(offsets.len());
                offsets.copy_from_slice(a);
                weights.copy_from_slice(b);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_loop_and_cap() {
        let c = ControlField::open_loop(1, 2, vec![0.5, -3.0]).unwrap().with_cap(1.0).unwrap();
        let mut q = [0.0];
        c.eval(0, 0, &[], &mut q);
        assert_eq!(q[0], 0.5);
        c.eval(1, 0, &[], &mut q);
        assert_eq!(q[0], -1.0);
    }

    #[test]
    fn affine_feedback_and_params_round_trip() {
        let c = ControlField::zero_affine(1, 2, 3).unwrap();
        assert_eq!(c.param_count(), 3 + 6);
        let p: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let c = c.with_params(&p).unwrap();
        assert_eq!(c.params(), p);
        let mut q = [0.0];
        // cell 1: offset 1, gains [5, 6]
        c.eval(1, 0, &[1.0, 2.0], &mut q);
        assert_eq!(q[0], 1.0 + 5.0 + 12.0);
    }

    #[test]
    fn radial_feedback_peaks_at_center() {
        let c = ControlField::radial(1, 1, vec![vec![0.0], vec![2.0]], 0.5).unwrap();
        let c = c.with_params(&[0.1, 1.0, -1.0]).unwrap();
        let mut q = [0.0];
        c.eval(0, 0, &[0.0], &mut q);
        assert!((q[0] - (0.1 + 1.0 - (-8.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn mismatches_are_rejected() {
        assert!(ControlField::open_loop(1, 2, vec![0.0]).is_err());
        assert!(ControlField::open_loop(1, 1, vec![f64::NAN]).is_err());
        let grid = TimeGrid::unit(4).unwrap();
        let c = ControlField::zero_open_loop(1, 8).unwrap();
        assert!(c.validate_for(&grid, 1, 1, 10).is_err());
        let s = ControlField::per_sample(1, 1, 3, vec![0.0; 3]).unwrap();
        assert!(s.validate_for(&grid, 1, 1, 4).is_err());
        assert!(s.validate_for(&grid, 1, 1, 3).is_ok());
    }
}
