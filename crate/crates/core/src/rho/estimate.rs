//! Estimates of `rho` and the log-mean-exp estimator.

use serde::{Deserialize, Serialize};

use super::TerminalFunctional;
use crate::error::{invalid, Result};
use crate::particles::ParticleEnsemble;

/// Normal quantile used for all confidence half-widths.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedFormMgf,
    Lsmc,
    DualLower,
}

/// A numerical value of `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub value: f64,
    /// 95% confidence half-width.
    pub ci: f64,
    pub method: Method,
    /// Noise index `n` of the dynamics.
    pub n: u32,
    pub samples: usize,
    /// Set for dual estimates: the value is a lower bound on `rho`.
    pub lower_bound: bool,
    /// Largest relative regression residual (backward regression only).
    pub residual: Option<f64>,
    /// `(evaluation, objective)` pairs from the optimizer (dual only).
    pub trace: Vec<(usize, f64)>,
}

/// `(1/n) log( (1/N) sum exp(n v_i) )` with max subtraction, and the delta-method
/// 95% half-width.
pub fn log_mean_exp(values: &[f64], n: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(invalid("log-mean-exp of an empty sample"));
    }
    if !(n > 0.0) {
        return Err(invalid("log-mean-exp needs a positive scale"));
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(invalid("log-mean-exp of a non-finite sample"));
    }
    let count = values.len() as f64;
    let w: Vec<f64> = values.iter().map(|v| (n * (v - max)).exp()).collect();
    let mean = w.iter().sum::<f64>() / count;
    let value = max + mean.ln() / n;
    let var = if values.len() > 1 {
        w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let ci = Z95 * var.sqrt() / (mean * count.sqrt()) / n;
    Ok((value, ci))
}

/// Sample mean and 95% half-width. The mean is accumulated as deviations from
/// the first value, so a constant sample returns that constant exactly.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let count = values.len() as f64;
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / count;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0);
    (mean, Z95 * (var / count).sqrt())
}

/// `rho` for the quadratic penalty: `(1/n) log E[exp(n F(X(1), L(1)))]` over
/// the particles of an ensemble simulated with noise index `n`.
pub fn rho_log_mgf_mc(f: &TerminalFunctional, ens: &ParticleEnsemble, n: u32) -> Result<RhoEstimate> {
    if ens.particles == 0 {
        return Err(invalid("empty ensemble"));
    }
    if ens.noise_index != n {
        return Err(invalid(format!(
            "ensemble was simulated with noise index {} but n = {n} was requested",
            ens.noise_index
        )));
    }
    f.check_dim(ens.dim)?;
    let measure = ens.final_measure();
    let values = f.eval_cloud(measure.points(), ens.dim, &measure.mean());
    let (value, ci) = log_mean_exp(&values, n as f64)?;
    Ok(RhoEstimate {
        value,
        ci,
        method: Method::ClosedFormMgf,
        n,
        samples: ens.particles,
        lower_bound: false,
        residual: None,
        trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_is_exact() {
        let (v, ci) = log_mean_exp(&[1.25; 10], 7.0).unwrap();
        assert_eq!(v, 1.25);
        assert_eq!(ci, 0.0);
    }

    #[test]
    fn two_point_sample() {
        let (v, _) = log_mean_exp(&[0.0, 1.0], 1.0).unwrap();
        assert!((v - ((1.0 + 1f64.exp()) / 2.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn survives_large_exponents() {
        let (v, _) = log_mean_exp(&[1000.0, 999.0], 64.0).unwrap();
        assert!(v.is_finite() && v < 1000.0 && v > 999.0);
        assert!(log_mean_exp(&[], 1.0).is_err());
    }
}
