//! Running costs and their convex conjugates.
//!
//! A [`CostFunction`] has the split form
//!
//! ```text
//! f(t, z, x, mu) = w(t) * h(s * z / w(t)^e) + f2(t, x, mu)
//! ```
//!
//! where `h` is a convex "z-part" from a small catalog (quadratic, power,
//! sampled table), `s` an input scale, `w` an optional piecewise-constant
//! time weight (`e = 0` scale form, `e = 1` perspective form) and `f2` a
//! bounded state/measure offset. The family is closed under conjugation in
//! `z`: the z-part conjugates, scale and perspective forms swap, the input
//! scale inverts and the offset changes sign.
//!
//! Measure arguments only enter through the mean of the measure.

mod envelope;
mod grid;
mod transform;

pub use envelope::pasch_hausdorff;
pub use grid::{Extrapolation, GridSpec, GridTable};
pub use transform::{biconjugate, legendre_transform, truncate_pair, viscosity_scale};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::particles::PiecewiseConstant;

/// Convex z-part of a cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CostKind {
    /// `(scale / 2) * |z|^2`
    Quadratic { scale: f64 },
    /// `(scale / p) * |z|^p` with `p > 1`
    Power { exponent: f64, scale: f64 },
    /// Values sampled on a grid.
    Grid(GridTable),
}

impl CostKind {
    #[inline]
    fn eval(&self, z: &[f64]) -> f64 {
        match self {
            CostKind::Quadratic { scale } => 0.5 * scale * z.iter().map(|v| v * v).sum::<f64>(),
            CostKind::Power { exponent, scale } => {
                let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                scale / exponent * r.powf(*exponent)
            }
            CostKind::Grid(t) => t.eval(z),
        }
    }

    fn is_closed_form(&self) -> bool {
        !matches!(self, CostKind::Grid(_))
    }
}

/// How a time weight `w(t)` enters the cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TimeModulation {
    None,
    /// `w(t) * h(z)`
    Scale(PiecewiseConstant),
    /// `w(t) * h(z / w(t))`
    Perspective(PiecewiseConstant),
}

/// Bounded state/measure offset `f2(t, x, mu)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OffsetKind {
    Constant(f64),
    /// `clamp(c + a.x + b.mean(mu), -bound, bound)`
    ClippedAffine {
        constant: f64,
        state_weights: Vec<f64>,
        mean_weights: Vec<f64>,
        bound: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateOffset {
    pub kind: OffsetKind,
    /// `+1` as declared, `-1` after conjugation.
    pub sign: f64,
}

impl StateOffset {
    #[inline]
    pub fn eval(&self, x: &[f64], mean: &[f64]) -> f64 {
        let v = match &self.kind {
            OffsetKind::Constant(c) => *c,
            OffsetKind::ClippedAffine {
                constant,
                state_weights,
                mean_weights,
                bound,
            } => {
                let lin = constant
                    + state_weights.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                    + mean_weights.iter().zip(mean).map(|(a, b)| a * b).sum::<f64>();
                lin.clamp(-bound, *bound)
            }
        };
        self.sign * v
    }

    pub fn bound(&self) -> f64 {
        match &self.kind {
            OffsetKind::Constant(c) => c.abs(),
            OffsetKind::ClippedAffine { bound, .. } => *bound,
        }
    }

    fn negated(&self) -> Self {
        Self {
            kind: self.kind.clone(),
            sign: -self.sign,
        }
    }
}

/// A running cost `f` or penalty `g` (see the module docs for the form).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostFunction {
    dim: usize,
    kind: CostKind,
    input_scale: f64,
    time: TimeModulation,
    offset: Option<StateOffset>,
}

impl CostFunction {
    /// `(scale / 2) |z|^2` on `R^dim`.
    pub fn quadratic(dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 || !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("quadratic cost needs dim >= 1 and scale > 0"));
        }
        Ok(Self::plain(dim, CostKind::Quadratic { scale }))
    }

    /// `(scale / p) |z|^p` on `R^dim`, `p > 1`.
    pub fn power(dim: usize, exponent: f64, scale: f64) -> Result<Self> {
        if !(exponent > 1.0 && exponent.is_finite()) {
            return Err(invalid(format!("power cost needs exponent p > 1, got {exponent}")));
        }
        if dim == 0 || !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("power cost needs dim >= 1 and scale > 0"));
        }
        Ok(Self::plain(dim, CostKind::Power { exponent, scale }))
    }

    /// Sampled cost. Convexity is not checked here; see
    /// [`CostFunction::check_convexity`].
    pub fn grid(table: GridTable) -> Self {
        Self::plain(table.dim(), CostKind::Grid(table))
    }

    fn plain(dim: usize, kind: CostKind) -> Self {
        Self {
            dim,
            kind,
            input_scale: 1.0,
            time: TimeModulation::None,
            offset: None,
        }
    }

    pub fn with_time(mut self, time: TimeModulation) -> Result<Self> {
        match &time {
            TimeModulation::Scale(w) | TimeModulation::Perspective(w) if w.min() <= 0.0 => {
                return Err(invalid("time weights must be positive"));
            }
            _ => {}
        }
        self.time = time;
        Ok(self)
    }

    pub fn with_offset(mut self, kind: OffsetKind) -> Result<Self> {
        if let OffsetKind::ClippedAffine { bound, .. } = &kind {
            if !(*bound >= 0.0 && bound.is_finite()) {
                return Err(invalid("offset bound must be finite and non-negative"));
            }
        }
        self.offset = Some(StateOffset { kind, sign: 1.0 });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn time(&self) -> &TimeModulation {
        &self.time
    }

    pub fn offset(&self) -> Option<&StateOffset> {
        self.offset.as_ref()
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn is_closed_form(&self) -> bool {
        self.kind.is_closed_form()
    }

    /// True for the standard Gibbs penalty `|q|^2 / 2` with no time or state dependence.
    pub fn is_standard_quadratic(&self) -> bool {
        matches!(self.kind, CostKind::Quadratic { scale } if (scale - 1.0).abs() < 1e-15)
            && self.input_scale == 1.0
            && self.time == TimeModulation::None
            && self.offset.is_none()
    }

    /// True when the cost does not depend on `(x, mu)`.
    pub fn is_state_free(&self) -> bool {
        self.offset.is_none()
    }

    #[inline]
    fn weight(&self, t: f64) -> (f64, f64) {
        match &self.time {
            TimeModulation::None => (1.0, 1.0),
            TimeModulation::Scale(w) => (w.at(t), 1.0),
            TimeModulation::Perspective(w) => {
                let v = w.at(t);
                (v, v)
            }
        }
    }

    /// `f1(t, z)`, the z-part including time weight and input scale.
    #[inline]
    pub fn eval_z(&self, t: f64, z: &[f64]) -> f64 {
        let (w, div) = self.weight(t);
        let s = self.input_scale / div;
        if s == 1.0 {
            return w * self.kind.eval(z);
        }
        let mut buf = [0.0; 4];
        if z.len() <= 4 {
            for (b, v) in buf.iter_mut().zip(z) {
                *b = v * s;
            }
            w * self.kind.eval(&buf[..z.len()])
        } else {
            let scaled: Vec<f64> = z.iter().map(|v| v * s).collect();
            w * self.kind.eval(&scaled)
        }
    }

    /// Full cost `f(t, z, x, mu)`; `mean` is the mean of `mu`.
    #[inline]
    pub fn eval(&self, t: f64, z: &[f64], x: &[f64], mean: &[f64]) -> f64 {
        let base = self.eval_z(t, z);
        match &self.offset {
            Some(o) => base + o.eval(x, mean),
            None => base,
        }
    }

    /// Rejects a sampled z-part whose second differences go below `-1e-12`
    /// (relative to the table scale).
    pub fn check_convexity(&self) -> Result<()> {
        if let CostKind::Grid(t) = &self.kind {
            if let Some((axis, index, second_difference)) = t.convexity_violation(1e-12) {
                return Err(crate::Error::ConvexityViolation {
                    axis,
                    index,
                    second_difference,
                });
            }
        }
        Ok(())
    }

    /// Checks the normalization `f1(t, 0) = 0` and `f1 >= 0` on the nodes of
    /// `probe` (the table grid itself for sampled costs). Returns the worst
    /// violation found, zero when both hold.
    pub fn normalization_defect(&self, probe: &GridSpec) -> f64 {
        let origin = vec![0.0; self.dim];
        let times = self.time_probe();
        let mut worst = 0.0f64;
        for &t in &times {
            worst = worst.max(self.eval_z(t, &origin).abs());
            let grid = match &self.kind {
                CostKind::Grid(table) => table.spec.scaled(1.0 / self.input_scale),
                _ => probe.clone(),
            };
            for i in 0..grid.len() {
                let v = self.eval_z(t, &grid.point(i));
                if v.is_finite() {
                    worst = worst.max(-v);
                }
            }
        }
        worst
    }

    fn time_probe(&self) -> Vec<f64> {
        match &self.time {
            TimeModulation::None => vec![0.0],
            TimeModulation::Scale(w) | TimeModulation::Perspective(w) => {
                let n = w.values().len();
                (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
            }
        }
    }
}

/// Where a conjugate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    ClosedForm,
    NumericGrid,
}

/// Grid bookkeeping for numerically computed conjugates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    /// Dual grid in the conjugate's own argument coordinates.
    pub dual_grid: GridSpec,
    /// Number of dual nodes whose maximizer sat on the primal box boundary.
    pub box_clipped: usize,
}

/// A cost and its convex conjugate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugatePair {
    pub primal: CostFunction,
    pub dual: CostFunction,
    pub provenance: Provenance,
    pub grid: Option<GridMetadata>,
}

impl ConjugatePair {
    pub fn is_box_clipped(&self) -> bool {
        self.grid.as_ref().is_some_and(|g| g.box_clipped > 0)
    }

    /// Smallest Young slack `f(z) + g(q) - q.z` over all `(z, q)` pairs.
    pub fn young_slack(&self, t: f64, zs: &[Vec<f64>], qs: &[Vec<f64>], x: &[f64], mean: &[f64]) -> f64 {
        let mut worst = f64::INFINITY;
        for z in zs {
            let fz = self.primal.eval(t, z, x, mean);
            for q in qs {
                let gq = self.dual.eval(t, q, x, mean);
                let dot: f64 = z.iter().zip(q).map(|(a, b)| a * b).sum();
                let slack = fz + gq - dot;
                if slack.is_finite() {
                    worst = worst.min(slack);
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_requires_exponent_above_one() {
        assert!(CostFunction::power(1, 1.0, 1.0).is_err());
        assert!(CostFunction::power(1, 0.5, 1.0).is_err());
        assert!(CostFunction::power(1, 1.5, 1.0).is_ok());
    }

    #[test]
    fn closed_forms_evaluate() {
        let q = CostFunction::quadratic(2, 1.0).unwrap();
        assert!((q.eval_z(0.0, &[3.0, 4.0]) - 12.5).abs() < 1e-14);
        let p = CostFunction::power(1, 4.0, 1.0).unwrap();
        assert!((p.eval_z(0.0, &[2.0]) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn offset_is_clipped() {
        let f = CostFunction::quadratic(1, 1.0)
            .unwrap()
            .with_offset(OffsetKind::ClippedAffine {
                constant: 0.0,
                state_weights: vec![10.0],
                mean_weights: vec![1.0],
                bound: 0.5,
            })
            .unwrap();
        assert_eq!(f.eval(0.0, &[0.0], &[3.0], &[0.0]), 0.5);
        assert_eq!(f.eval(0.0, &[0.0], &[-3.0], &[0.0]), -0.5);
        assert!((f.eval(0.0, &[0.0], &[0.01], &[0.2]) - 0.3).abs() < 1e-14);
    }

    #[test]
    fn time_weights_must_be_positive() {
        let w = PiecewiseConstant::new(vec![1.0, 0.0]).unwrap();
        assert!(CostFunction::quadratic(1, 1.0).unwrap().with_time(TimeModulation::Scale(w)).is_err());
    }

    #[test]
    fn normalization_holds_for_catalog_entries() {
        let probe = GridSpec::symmetric(1, 3.0, 31).unwrap();
        assert_eq!(CostFunction::quadratic(1, 2.0).unwrap().normalization_defect(&probe), 0.0);
        assert_eq!(CostFunction::power(1, 3.0, 1.0).unwrap().normalization_defect(&probe), 0.0);
    }
}
