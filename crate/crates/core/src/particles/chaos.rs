//! Propagation-of-chaos diagnostics.

use serde::{Deserialize, Serialize};

use super::{simulate_mckv_with, wasserstein2, CoefficientSet, InitialCondition, Retention, TimeGrid};
use crate::error::{invalid, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosRow {
    pub particles: usize,
    pub w2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosReport {
    pub rows: Vec<ChaosRow>,
    pub reference_particles: usize,
    /// Least-squares slope of `log W2` against `log N`; absent when fewer
    /// than two rows or some distance is zero.
    pub slope: Option<f64>,
}

/// `W2` between the time-1 laws of systems with `ns` particles and a
/// reference system with `n_ref` particles, each run on its own seed.
pub fn chaos_report(
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    init: &InitialCondition,
    ns: &[usize],
    n_ref: usize,
    seed: u64,
) -> Result<ChaosReport> {
    chaos_report_averaged(coeffs, grid, init, ns, n_ref, 1, seed)
}

/// As [`chaos_report`], with each distance averaged over `replicates`
/// independent systems of the same size (one shared reference).
pub fn chaos_report_averaged(
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    init: &InitialCondition,
    ns: &[usize],
    n_ref: usize,
    replicates: usize,
    seed: u64,
) -> Result<ChaosReport> {
    if ns.is_empty() {
        return Err(invalid("need at least one particle count"));
    }
    if ns.iter().any(|&n| n == 0 || n >= n_ref) {
        return Err(invalid("every particle count must be positive and below the reference count"));
    }
    if replicates == 0 {
        return Err(invalid("need at least one replicate"));
    }
    let reference = simulate_mckv_with(coeffs, grid, init, n_ref, None, derive_seed(seed, u64::MAX), Retention::Final)?
        .final_measure();
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut total = 0.0;
        for r in 0..replicates {
            let s = match r {
                0 => derive_seed(seed, n as u64),
                _ => derive_seed(derive_seed(seed, n as u64), r as u64),
            };
            let e = simulate_mckv_with(coeffs, grid, init, n, None, s, Retention::Final)?;
            total += wasserstein2(&e.final_measure(), &reference)?;
        }
        rows.push(ChaosRow {
            particles: n,
            w2: total / replicates as f64,
        });
    }
    let slope = loglog_slope(&rows);
    Ok(ChaosReport {
        rows,
        reference_particles: n_ref,
        slope,
    })
}

fn loglog_slope(rows: &[ChaosRow]) -> Option<f64> {
    if rows.len() < 2 || rows.iter().any(|r| !(r.w2 > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.particles as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.w2.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}
