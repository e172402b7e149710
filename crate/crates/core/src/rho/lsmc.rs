//! Backward least-squares Monte Carlo for the BSDE
//! `Y_t = F + int_t^1 f(s, sqrt(n) Z_s, X_s, L_s) ds - int_t^1 Z_s dW_s`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::estimate::{mean_ci, Method, RhoEstimate};
use super::TerminalFunctional;
use crate::convex::CostFunction;
use crate::error::{invalid, Error, Result};
use crate::particles::{mean_of, CoefficientSet, InitialCondition, Noise, Retention, Simulation, TimeGrid};
use crate::rng::NormalStream;

/// Condition numbers of the regression Gram matrix above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BasisFamily {
    /// Monomials of total degree at most `degree` in the standardized state.
    Polynomial { degree: usize },
    /// Gaussian bumps centred at quantiles of the first coordinate, plus a constant.
    Radial { centers: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionBasisSpec {
    pub family: BasisFamily,
    /// Ridge penalty on every coefficient except the intercept.
    pub ridge: f64,
}

impl Default for RegressionBasisSpec {
    fn default() -> Self {
        Self {
            family: BasisFamily::Polynomial { degree: 3 },
            ridge: 1e-8,
        }
    }
}

impl RegressionBasisSpec {
    pub fn validate(&self) -> Result<()> {
        match self.family {
            BasisFamily::Polynomial { degree } if degree < 1 => {
                return Err(invalid("polynomial basis needs degree >= 1"))
            }
            BasisFamily::Radial { centers } if centers < 1 => return Err(invalid("radial basis needs a center")),
            _ => {}
        }
        if !(self.ridge >= 0.0) {
            return Err(invalid("ridge penalty must be non-negative"));
        }
        Ok(())
    }

    /// Number of basis functions in dimension `m`.
    pub fn size(&self, m: usize) -> usize {
        match self.family {
            BasisFamily::Polynomial { degree } => exponents(m, degree).len(),
            BasisFamily::Radial { centers } => centers + 1,
        }
    }
}

/// Exponent tuples of total degree `<= degree`, constant first.
fn exponents(m: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; m]];
    for total in 1..=degree {
        let mut cur = vec![0; m];
        fill_exponents(&mut out, &mut cur, 0, total);
    }
    out
}

fn fill_exponents(out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, pos: usize, left: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        fill_exponents(out, cur, pos + 1, left - e);
    }
}

/// Design matrix for the states `x` (row-major, dimension `m`); a lone
/// constant column when the states have no spread.
fn design(spec: &RegressionBasisSpec, x: &[f64], m: usize) -> DMatrix<f64> {
    let n = x.len() / m;
    let mean = mean_of(x, m);
    let sd: Vec<f64> = (0..m)
        .map(|c| (x.iter().skip(c).step_by(m).map(|v| (v - mean[c]).powi(2)).sum::<f64>() / n as f64).sqrt())
        .collect();
    let spread = sd.iter().zip(&mean).any(|(s, mu)| *s > 1e-10 * (1.0 + mu.abs()));
    if !spread {
        return DMatrix::from_element(n, 1, 1.0);
    }
    let z: Vec<f64> = x
        .chunks_exact(m)
        .flat_map(|p| {
            p.iter()
                .enumerate()
                .map(|(c, v)| if sd[c] > 0.0 { (v - mean[c]) / sd[c] } else { 0.0 })
                .collect::<Vec<_>>()
        })
        .collect();
    match spec.family {
        BasisFamily::Polynomial { degree } => {
            let exps = exponents(m, degree);
            DMatrix::from_fn(n, exps.len(), |i, j| {
                exps[j]
                    .iter()
                    .enumerate()
                    .map(|(c, &e)| z[i * m + c].powi(e as i32))
                    .product()
            })
        }
        BasisFamily::Radial { centers } => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| z[a * m].total_cmp(&z[b * m]));
            let idx: Vec<usize> = (0..centers)
                .map(|j| order[((j as f64 + 0.5) / centers as f64 * n as f64) as usize])
                .collect();
            let first = z[idx[0] * m];
            let last = z[idx[centers - 1] * m];
            let width = ((last - first) / centers as f64).max(0.25);
            let inv = 1.0 / (2.0 * width * width);
            DMatrix::from_fn(n, centers + 1, |i, j| {
                if j == 0 {
                    1.0
                } else {
                    let c = idx[j - 1];
                    let r2: f64 = (0..m).map(|k| (z[i * m + k] - z[c * m + k]).powi(2)).sum();
                    (-r2 * inv).exp()
                }
            })
        }
    }
}

/// Least-squares fits of several targets on one design; returns fitted values
/// per target and the fraction of variance left unexplained for the first.
fn regress(
    phi: &DMatrix<f64>,
    targets: &[DVector<f64>],
    ridge: f64,
    step: usize,
) -> Result<(Vec<DVector<f64>>, f64)> {
    let n = phi.nrows() as f64;
    let mut gram = phi.transpose() * phi / n;
    for j in 1..gram.nrows() {
        gram[(j, j)] += ridge;
    }
    let eig = gram.symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { step, condition });
    }
    let chol = gram.cholesky().ok_or(Error::IllConditioned { step, condition })?;
    let mut fitted = Vec::with_capacity(targets.len());
    for y in targets {
        let beta = chol.solve(&(phi.transpose() * y / n));
        fitted.push(phi * beta);
    }
    let y = &targets[0];
    let ybar = y.mean();
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let rss: f64 = y.iter().zip(fitted[0].iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let unexplained = if tss > 0.0 { rss / tss } else { 0.0 };
    Ok((fitted, unexplained))
}

/// `Y_0` of the BSDE with terminal value `F(X(1), L(1))` and generator
/// `f(t, sqrt(n) z, x, mu)`, where `n` is the noise index of `coeffs`.
///
/// One-step scheme: `C_k = E_k[Y_{k+1}]` and `Z_k = E_k[(Y_{k+1} - C_k) dW_k] / dt`
/// by regression on the basis, then `Y_k = C_k + f(Z_k) dt`. The half-width
/// is computed from the pathwise sums `F + sum_k f(Z_k) dt`.
#[allow(clippy::too_many_arguments)]
pub fn bsde_lsmc(
    f: &TerminalFunctional,
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    init: &InitialCondition,
    generator: &CostFunction,
    basis: &RegressionBasisSpec,
    particles: usize,
    seed: u64,
) -> Result<RhoEstimate> {
    basis.validate()?;
    let m = coeffs.state_dim();
    let d = coeffs.noise_dim();
    f.check_dim(m)?;
    if generator.dim() != d {
        return Err(invalid("generator dimension does not match the noise dimension"));
    }
    let size = basis.size(m);
    if particles < 50 * size {
        return Err(invalid(format!(
            "{particles} particles are too few for {size} basis functions (need at least {})",
            50 * size
        )));
    }
    let x0 = init.sample(m, particles, seed)?;
    let stream = NormalStream::new(seed);
    let run = Simulation {
        coeffs,
        grid: *grid,
        control: None,
        noise: Noise::Counter(stream),
        penalty: None,
    }
    .run(x0, Retention::All)?;
    let states = run.states;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let root_n = (coeffs.noise_index() as f64).sqrt();
    let steps = grid.steps();

    let final_mean = mean_of(&states[steps], m);
    let mut y = DVector::from_vec(f.eval_cloud(&states[steps], m, &final_mean));
    let mut pathwise: Vec<f64> = y.iter().cloned().collect();
    let mut unexplained_sum = 0.0;
    let mut z = vec![0.0; d];
    let mut zvec = vec![0.0; d];
    for k in (0..steps).rev() {
        let x = &states[k];
        let t = grid.node(k);
        let mean = mean_of(x, m);
        let dw: Vec<f64> = (0..particles)
            .flat_map(|i| {
                stream.fill(i as u64, k as u32, &mut z);
                z.iter().map(|v| v * sqrt_dt).collect::<Vec<_>>()
            })
            .collect();
        let phi = design(basis, x, m);
        let (cont, unexplained) = regress(&phi, std::slice::from_ref(&y), basis.ridge, k)?;
        let cont = cont.into_iter().next().expect("one target");
        let targets: Vec<DVector<f64>> = (0..d)
            .map(|c| DVector::from_fn(particles, |i, _| (y[i] - cont[i]) * dw[i * d + c] / dt))
            .collect();
        let (zfit, _) = regress(&phi, &targets, basis.ridge, k)?;
        unexplained_sum += unexplained;
        for i in 0..particles {
            for c in 0..d {
                zvec[c] = root_n * zfit[c][i];
            }
            let gen = generator.eval(t, &zvec, &x[i * m..(i + 1) * m], &mean);
            if !gen.is_finite() {
                return Err(Error::NonFiniteState { step: k });
            }
            y[i] = cont[i] + gen * dt;
            pathwise[i] += gen * dt;
        }
    }
    let value = mean_ci(y.as_slice()).0;
    let (_, ci) = mean_ci(&pathwise);
    Ok(RhoEstimate {
        value,
        ci,
        method: Method::Lsmc,
        n: coeffs.noise_index(),
        samples: particles,
        lower_bound: false,
        residual: Some(unexplained_sum / steps as f64),
        trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::{Extrapolation, GridSpec, GridTable};

    fn linear_generator(alpha: f64) -> CostFunction {
        let spec = GridSpec::symmetric(1, 1.0, 3).unwrap();
        CostFunction::grid(GridTable::from_fn(spec, Extrapolation::Linear, |z| alpha * z[0]).unwrap())
    }

    #[test]
    fn exponent_enumeration() {
        assert_eq!(exponents(1, 3).len(), 4);
        assert_eq!(exponents(2, 2).len(), 6);
        assert_eq!(exponents(3, 3).len(), 20);
    }

    #[test]
    fn zero_generator_is_the_mean() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let grid = TimeGrid::unit(32).unwrap();
        let r = bsde_lsmc(
            &TerminalFunctional::linear(1.0),
            &c,
            &grid,
            &InitialCondition::Point(vec![0.0]),
            &linear_generator(0.0),
            &RegressionBasisSpec::default(),
            20_000,
            4,
        )
        .unwrap();
        assert!(r.value.abs() < 1e-2 + r.ci, "{r:?}");
    }

    #[test]
    fn linear_generator_shifts_by_alpha() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let grid = TimeGrid::unit(32).unwrap();
        let r = bsde_lsmc(
            &TerminalFunctional::linear(1.0),
            &c,
            &grid,
            &InitialCondition::Point(vec![0.0]),
            &linear_generator(0.7),
            &RegressionBasisSpec::default(),
            20_000,
            5,
        )
        .unwrap();
        // Z = 1 exactly, so the drift term is deterministic and Y_0 - 0.7 is a sample mean of W(1).
        assert!((r.value - 0.7).abs() < 1e-2 + r.ci, "{r:?}");
    }

    #[test]
    fn too_few_particles_rejected() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let grid = TimeGrid::unit(4).unwrap();
        let err = bsde_lsmc(
            &TerminalFunctional::linear(1.0),
            &c,
            &grid,
            &InitialCondition::Point(vec![0.0]),
            &linear_generator(0.0),
            &RegressionBasisSpec::default(),
            100,
            1,
        );
        assert!(err.is_err());
    }
}
