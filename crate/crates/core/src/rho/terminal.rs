//! Terminal functionals `F(x, mu)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::NormalStream;

/// One summand of a terminal functional. `coord` selects a state coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Constant(f64),
    /// `clamp(sum_k c_k x^k, -clip, clip)`; unclipped when `clip` is `None`.
    Polynomial {
        coord: usize,
        coeffs: Vec<f64>,
        clip: Option<f64>,
    },
    /// `-weight * |x - center|^2`
    NegSquaredDistance { weight: f64, center: Vec<f64> },
    /// `weight * mean(mu)_coord`
    MeanLinear { coord: usize, weight: f64 },
    /// `weight * tanh(scale * x + shift)`
    Tanh {
        coord: usize,
        weight: f64,
        scale: f64,
        shift: f64,
    },
}

impl Term {
    #[inline]
    fn eval(&self, x: &[f64], mean: &[f64]) -> f64 {
        match self {
            Term::Constant(c) => *c,
            Term::Polynomial { coord, coeffs, clip } => {
                let mut acc = 0.0;
                for c in coeffs.iter().rev() {
                    acc = acc * x[*coord] + c;
                }
                match clip {
                    Some(b) => acc.clamp(-b, *b),
                    None => acc,
                }
            }
            Term::NegSquaredDistance { weight, center } => {
                -weight * x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            }
            Term::MeanLinear { coord, weight } => weight * mean[*coord],
            Term::Tanh {
                coord,
                weight,
                scale,
                shift,
            } => weight * (scale * x[*coord] + shift).tanh(),
        }
    }

    fn max_coord(&self) -> usize {
        match self {
            Term::Constant(_) => 0,
            Term::Polynomial { coord, .. } | Term::MeanLinear { coord, .. } | Term::Tanh { coord, .. } => coord + 1,
            Term::NegSquaredDistance { center, .. } => center.len(),
        }
    }
}

/// `F(x, mu) = sum of terms`, with an optional declared sup-norm bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalFunctional {
    terms: Vec<Term>,
    bound: Option<f64>,
}

impl TerminalFunctional {
    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms, bound: None }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![Term::Constant(c)])
    }

    /// `F(x) = w * x_1`
    pub fn linear(w: f64) -> Self {
        Self::new(vec![Term::Polynomial {
            coord: 0,
            coeffs: vec![0.0, w],
            clip: None,
        }])
    }

    /// `F(x) = -a |x - c|^2`
    pub fn neg_squared_distance(a: f64, center: Vec<f64>) -> Self {
        Self::new(vec![Term::NegSquaredDistance { weight: a, center }])
    }

    /// `F(x) = tanh(x_1)`
    pub fn tanh() -> Self {
        Self::new(vec![Term::Tanh {
            coord: 0,
            weight: 1.0,
            scale: 1.0,
            shift: 0.0,
        }])
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    /// `F + c`
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.terms.push(Term::Constant(c));
        out.bound = self.bound.map(|b| b + c.abs());
        out
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    /// Smallest state dimension the terms refer to.
    pub fn min_dim(&self) -> usize {
        self.terms.iter().map(Term::max_coord).max().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| matches!(t, Term::Constant(_)))
    }

    /// True when `F` does not depend on the measure argument.
    pub fn is_measure_free(&self) -> bool {
        !self.terms.iter().any(|t| matches!(t, Term::MeanLinear { .. }))
    }

    #[inline]
    pub fn eval(&self, x: &[f64], mean: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x, mean)).sum()
    }

    /// Values `F(X_i, L)` over a row-major point cloud with mean `mean`.
    pub fn eval_cloud(&self, points: &[f64], dim: usize, mean: &[f64]) -> Vec<f64> {
        points.chunks_exact(dim).map(|x| self.eval(x, mean)).collect()
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.min_dim() > dim {
            return Err(invalid(format!(
                "terminal functional refers to coordinate {} but the state has dimension {dim}",
                self.min_dim()
            )));
        }
        Ok(())
    }

    /// Randomized probe on `[-3, 3]^dim`: returns the largest `|F|` seen (to
    /// compare with the declared bound) and the largest change under a
    /// perturbation of size `eps`.
    pub fn probe(&self, dim: usize, pairs: usize, eps: f64, seed: u64) -> (f64, f64) {
        let s = NormalStream::new(seed);
        let mut sup = 0.0f64;
        let mut jump = 0.0f64;
        for p in 0..pairs {
            let x: Vec<f64> = (0..dim).map(|c| 6.0 * s.uniform_pair(p as u64, 0, c as u32).0 - 3.0).collect();
            let mean: Vec<f64> = (0..dim).map(|c| 6.0 * s.uniform_pair(p as u64, 1, c as u32).0 - 3.0).collect();
            let y: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(c, v)| v + eps * (2.0 * s.uniform_pair(p as u64, 2, c as u32).0 - 1.0))
                .collect();
            let (fx, fy) = (self.eval(&x, &mean), self.eval(&y, &mean));
            sup = sup.max(fx.abs());
            jump = jump.max((fx - fy).abs());
        }
        (sup, jump)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_entries() {
        assert_eq!(TerminalFunctional::constant(2.5).eval(&[7.0], &[0.0]), 2.5);
        assert_eq!(TerminalFunctional::linear(2.0).eval(&[3.0], &[0.0]), 6.0);
        assert_eq!(TerminalFunctional::neg_squared_distance(1.0, vec![1.0]).eval(&[3.0], &[0.0]), -4.0);
        let f = TerminalFunctional::new(vec![Term::MeanLinear { coord: 0, weight: 0.5 }]);
        assert_eq!(f.eval(&[100.0], &[2.0]), 1.0);
        assert!(!f.is_measure_free());
        let clipped = TerminalFunctional::new(vec![Term::Polynomial {
            coord: 0,
            coeffs: vec![0.0, 0.0, 1.0],
            clip: Some(1.0),
        }]);
        assert_eq!(clipped.eval(&[3.0], &[0.0]), 1.0);
    }

    #[test]
    fn bounded_functional_respects_bound() {
        let f = TerminalFunctional::tanh().shifted(0.5).with_bound(1.5);
        let (sup, jump) = f.probe(1, 1000, 1e-6, 3);
        assert!(sup <= f.bound().unwrap());
        assert!(jump < 1e-5);
    }

    #[test]
    fn dimension_check() {
        let f = TerminalFunctional::neg_squared_distance(1.0, vec![0.0, 0.0]);
        assert!(f.check_dim(1).is_err());
        assert!(f.check_dim(2).is_ok());
    }
}
