use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniform grid `s = t_0 < t_1 < ... < t_K = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    start: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(start: f64, steps: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&start) {
            return Err(invalid(format!("grid start must lie in [0, 1), got {start}")));
        }
        if steps == 0 {
            return Err(invalid("time grid needs at least one step"));
        }
        Ok(Self { start, steps })
    }

    /// `[0, 1]` with `steps` steps.
    pub fn unit(steps: usize) -> Result<Self> {
        Self::new(0.0, steps)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        (1.0 - self.start) / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            1.0
        } else {
            self.start + k as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    /// Index of the control cell containing step `k` when `[s, 1]` is cut
    /// into `cells` equal cells.
    pub fn cell_of_step(&self, k: usize, cells: usize) -> usize {
        (k * cells / self.steps).min(cells - 1)
    }
}

/// Piecewise-constant function on `[0, 1]` with equal-width pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("piecewise-constant table needs at least one value"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("piecewise-constant table has a non-finite entry"));
        }
        Ok(Self { values })
    }

    pub fn constant(v: f64) -> Self {
        Self { values: vec![v] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        let n = self.values.len();
        if n == 1 {
            return self.values[0];
        }
        let i = ((t * n as f64).floor().max(0.0) as usize).min(n - 1);
        self.values[i]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_strictly_increasing_and_end_at_one() {
        let g = TimeGrid::new(0.25, 6).unwrap();
        let n = g.nodes();
        assert_eq!(n.len(), 7);
        assert_eq!(n[0], 0.25);
        assert_eq!(n[6], 1.0);
        assert!(n.windows(2).all(|w| w[1] > w[0]));
        assert!((g.dt() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(1.0, 4).is_err());
        assert!(TimeGrid::new(-0.1, 4).is_err());
        assert!(TimeGrid::new(0.0, 0).is_err());
    }

    #[test]
    fn cells_partition_steps_evenly() {
        let g = TimeGrid::unit(512).unwrap();
        let mut counts = vec![0; 20];
        for k in 0..512 {
            counts[g.cell_of_step(k, 20)] += 1;
        }
        assert!(counts.iter().all(|&c| c == 25 || c == 26));
    }

    #[test]
    fn piecewise_lookup() {
        let p = PiecewiseConstant::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(p.at(0.0), 1.0);
        assert_eq!(p.at(0.3), 2.0);
        assert_eq!(p.at(1.0), 4.0);
    }
}
