//! Drift and diffusion coefficients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::measure::{wasserstein2, EmpiricalMeasure};
use super::PiecewiseConstant;
use crate::error::{invalid, Error, Result};
use crate::rng::NormalStream;

/// Drift catalog. The measure argument only enters through its mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Drift {
    Zero,
    /// `b_i = alpha_i(t) + beta(t) x_i + gamma(t) mean_i`
    Linear {
        alpha: Vec<PiecewiseConstant>,
        beta: PiecewiseConstant,
        gamma: PiecewiseConstant,
    },
    /// `b_i = clamp(sum_k c_k x_i^k + mean_weight * mean_i, -clip, clip)`
    ClippedPolynomial {
        coeffs: Vec<f64>,
        mean_weight: f64,
        clip: f64,
    },
}

impl Drift {
    /// Time-homogeneous linear drift `alpha + beta x + gamma mean` in every coordinate.
    pub fn linear(dim: usize, alpha: f64, beta: f64, gamma: f64) -> Self {
        Drift::Linear {
            alpha: vec![PiecewiseConstant::constant(alpha); dim],
            beta: PiecewiseConstant::constant(beta),
            gamma: PiecewiseConstant::constant(gamma),
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], mean: &[f64], out: &mut [f64]) {
        match self {
            Drift::Zero => out.fill(0.0),
            Drift::Linear { alpha, beta, gamma } => {
                let (b, g) = (beta.at(t), gamma.at(t));
                for i in 0..out.len() {
                    out[i] = alpha[i].at(t) + b * x[i] + g * mean[i];
                }
            }
            Drift::ClippedPolynomial {
                coeffs,
                mean_weight,
                clip,
            } => {
                for i in 0..out.len() {
                    let mut acc = 0.0;
                    for c in coeffs.iter().rev() {
                        acc = acc * x[i] + c;
                    }
                    out[i] = (acc + mean_weight * mean[i]).clamp(-clip, *clip);
                }
            }
        }
    }
}

/// Diffusion catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Diffusion {
    /// Constant `m x d` matrix.
    Constant(DMatrix<f64>),
    /// `base * (1 + amplitude * sin(frequency * (x_1 - mean_1)))`, `amplitude < 1`.
    Modulated {
        base: DMatrix<f64>,
        amplitude: f64,
        frequency: f64,
    },
}

impl Diffusion {
    pub fn scalar(sigma: f64) -> Self {
        Diffusion::Constant(DMatrix::from_element(1, 1, sigma))
    }

    fn base(&self) -> &DMatrix<f64> {
        match self {
            Diffusion::Constant(b) | Diffusion::Modulated { base: b, .. } => b,
        }
    }

    fn factor(&self, x: &[f64], mean: &[f64]) -> f64 {
        match self {
            Diffusion::Constant(_) => 1.0,
            Diffusion::Modulated {
                amplitude, frequency, ..
            } => 1.0 + amplitude * (frequency * (x[0] - mean[0])).sin(),
        }
    }
}

/// Drift `b`, diffusion `sigma` and noise index `n` of
/// `dX = (b + sigma q) dt + n^{-1/2} sigma dW`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    drift: Drift,
    diffusion: Diffusion,
    noise_index: u32,
    lipschitz: Option<f64>,
}

/// Outcome of the randomized Lipschitz probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProbe {
    /// Largest observed `|b - b'| / (|x - x'| + W2(mu, mu'))`.
    pub max_ratio: f64,
    pub declared: Option<f64>,
    pub pairs: usize,
    /// The linear family is unbounded, so the boundedness half of the drift
    /// assumptions is not probed for it.
    pub boundedness_skipped: bool,
}

impl LipschitzProbe {
    pub fn passes(&self) -> bool {
        self.declared.is_none_or(|l| self.max_ratio <= l * (1.0 + 1e-9))
    }
}

impl CoefficientSet {
    pub fn new(drift: Drift, diffusion: Diffusion, noise_index: u32) -> Result<Self> {
        if noise_index == 0 {
            return Err(invalid("noise index n must be at least 1"));
        }
        let base = diffusion.base();
        let m = base.nrows();
        if m == 0 || base.ncols() == 0 {
            return Err(invalid("diffusion matrix must be non-empty"));
        }
        if base.iter().any(|v| !v.is_finite()) {
            return Err(invalid("diffusion matrix must be finite"));
        }
        match &drift {
            Drift::Linear { alpha, .. } if alpha.len() != m => {
                return Err(invalid(format!(
                    "linear drift has {} intercepts for state dimension {m}",
                    alpha.len()
                )));
            }
            Drift::ClippedPolynomial { clip, coeffs, .. } if !(*clip >= 0.0) || coeffs.is_empty() => {
                return Err(invalid("clipped polynomial drift needs coefficients and a non-negative clip"));
            }
            _ => {}
        }
        if let Diffusion::Modulated { amplitude, .. } = &diffusion {
            if !(0.0..1.0).contains(amplitude) {
                return Err(invalid("modulation amplitude must lie in [0, 1)"));
            }
        }
        Ok(Self {
            drift,
            diffusion,
            noise_index,
            lipschitz: None,
        })
    }

    /// One-dimensional `b = alpha + beta x + gamma mean`, `sigma` constant.
    pub fn linear_1d(alpha: f64, beta: f64, gamma: f64, sigma: f64, noise_index: u32) -> Result<Self> {
        Self::new(Drift::linear(1, alpha, beta, gamma), Diffusion::scalar(sigma), noise_index)
    }

    pub fn with_lipschitz(mut self, constant: f64) -> Self {
        self.lipschitz = Some(constant);
        self
    }

    pub fn with_noise_index(&self, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(invalid("noise index n must be at least 1"));
        }
        let mut out = self.clone();
        out.noise_index = n;
        Ok(out)
    }

    pub fn state_dim(&self) -> usize {
        self.diffusion.base().nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.diffusion.base().ncols()
    }

    pub fn noise_index(&self) -> u32 {
        self.noise_index
    }

    pub fn drift(&self) -> &Drift {
        &self.drift
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    /// True when `sigma` is identically zero.
    pub fn is_deterministic(&self) -> bool {
        self.diffusion.base().iter().all(|&v| v == 0.0)
    }

    #[inline]
    pub fn drift_at(&self, t: f64, x: &[f64], mean: &[f64], out: &mut [f64]) {
        self.drift.eval(t, x, mean, out);
    }

    /// Writes `sigma(t, x, mu)` row-major (`m x d`) into `out`.
    pub fn diffusion_at(&self, x: &[f64], mean: &[f64], out: &mut [f64]) {
        let base = self.diffusion.base();
        let f = self.diffusion.factor(x, mean);
        let d = base.ncols();
        for r in 0..base.nrows() {
            for c in 0..d {
                out[r * d + c] = f * base[(r, c)];
            }
        }
    }

    /// Row-major base matrix and the state-dependent factor, for hot loops.
    pub(crate) fn sigma_rows(&self) -> Vec<f64> {
        row_major(self.diffusion.base())
    }

    #[inline]
    pub(crate) fn sigma_factor(&self, x: &[f64], mean: &[f64]) -> f64 {
        self.diffusion.factor(x, mean)
    }

    /// Ellipticity constant `C2`: a lower bound on the smallest eigenvalue of
    /// `sigma sigma^T` over all states. Zero when `m > d`.
    pub fn ellipticity(&self) -> f64 {
        let base = self.diffusion.base();
        let a = base * base.transpose();
        let lmin = a.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
        match &self.diffusion {
            Diffusion::Constant(_) => lmin,
            Diffusion::Modulated { amplitude, .. } => lmin * (1.0 - amplitude).powi(2),
        }
    }

    /// Errors when `C2` is below `threshold`.
    pub fn check_ellipticity(&self, threshold: f64) -> Result<f64> {
        let c2 = self.ellipticity();
        if c2 < threshold {
            return Err(Error::EllipticityViolation {
                step: 0,
                value: c2,
                threshold,
            });
        }
        Ok(c2)
    }

    /// Randomized two-point probe of the drift's Lipschitz constant on states
    /// in `[-3, 3]^m` and eight-point clouds.
    pub fn probe_lipschitz(&self, seed: u64, pairs: usize) -> LipschitzProbe {
        let m = self.state_dim();
        let stream = NormalStream::new(seed);
        let cloud = 8;
        let mut b0 = vec![0.0; m];
        let mut b1 = vec![0.0; m];
        let mut max_ratio = 0.0f64;
        for p in 0..pairs {
            let draw = |step: u32, c: usize| {
                let (u, _) = stream.uniform_pair(p as u64, step, c as u32);
                6.0 * u - 3.0
            };
            let t = stream.uniform_pair(p as u64, 0, 0).1;
            let x0: Vec<f64> = (0..m).map(|c| draw(1, c)).collect();
            // Half the probes move x only, the other half the measure too.
            let x1: Vec<f64> = if p % 2 == 0 {
                x0.iter().enumerate().map(|(c, v)| v + 0.1 * draw(2, c)).collect()
            } else {
                x0.clone()
            };
            let mu0: Vec<f64> = (0..cloud * m).map(|c| draw(3, c)).collect();
            let mu1: Vec<f64> = if p % 2 == 0 {
                mu0.clone()
            } else {
                (0..cloud * m).map(|c| draw(4, c)).collect()
            };
            let a = EmpiricalMeasure::new(m, mu0).expect("probe cloud");
            let b = EmpiricalMeasure::new(m, mu1).expect("probe cloud");
            let w = wasserstein2(&a, &b).expect("probe clouds are small");
            let dx = x0.iter().zip(&x1).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            let denom = dx + w;
            if denom < 1e-12 {
                continue;
            }
            self.drift_at(t, &x0, &a.mean(), &mut b0);
            self.drift_at(t, &x1, &b.mean(), &mut b1);
            let db = b0.iter().zip(&b1).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            max_ratio = max_ratio.max(db / denom);
        }
        LipschitzProbe {
            max_ratio,
            declared: self.lipschitz,
            pairs,
            boundedness_skipped: matches!(self.drift, Drift::Linear { .. }),
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_drift_evaluates() {
        let c = CoefficientSet::linear_1d(0.5, -1.0, 2.0, 1.0, 1).unwrap();
        let mut out = [0.0];
        c.drift_at(0.3, &[2.0], &[1.0], &mut out);
        assert_eq!(out[0], 0.5 - 2.0 + 2.0);
    }

    #[test]
    fn clipped_polynomial_respects_clip() {
        let d = Drift::ClippedPolynomial {
            coeffs: vec![0.0, 0.0, 1.0],
            mean_weight: 0.0,
            clip: 2.0,
        };
        let mut out = [0.0];
        d.eval(0.0, &[5.0], &[0.0], &mut out);
        assert_eq!(out[0], 2.0);
        d.eval(0.0, &[1.0], &[0.0], &mut out);
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn ellipticity_of_constant_and_degenerate_sigma() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let c = CoefficientSet::new(Drift::Zero, Diffusion::Constant(s), 1).unwrap();
        assert!((c.ellipticity() - 0.25).abs() < 1e-12);
        let tall = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let c = CoefficientSet::new(Drift::Zero, Diffusion::Constant(tall), 1).unwrap();
        assert!(c.ellipticity() < 1e-12);
        assert!(matches!(c.check_ellipticity(1e-8), Err(Error::EllipticityViolation { .. })));
    }

    #[test]
    fn lipschitz_probe_of_linear_drift() {
        let c = CoefficientSet::linear_1d(0.0, -1.0, 0.5, 1.0, 1).unwrap().with_lipschitz(1.5);
        let probe = c.probe_lipschitz(7, 1000);
        assert!(probe.passes(), "{probe:?}");
        assert!(probe.max_ratio > 0.4);
        assert!(probe.boundedness_skipped);
        let tight = CoefficientSet::linear_1d(0.0, -1.0, 0.5, 1.0, 1).unwrap().with_lipschitz(0.2);
        assert!(!tight.probe_lipschitz(7, 1000).passes());
    }

    #[test]
    fn rejects_zero_noise_index() {
        assert!(CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 0).is_err());
    }
}
