//! Closed-form references for linear dynamics with constant `sigma`.
//!
//! With `b = alpha + beta x + gamma mean` the state at time one is
//! `e x0 + c + N(0, S)`, where the scalars/vectors `e`, `c` and the matrix
//! `S` solve linear ODEs driven by the mean path. Exponential moments of
//! linear and negative-quadratic payoffs are then explicit.

use nalgebra::{DMatrix, DVector};

use super::config::{DriftSpec, DynamicsSpec};
use crate::particles::{InitialCondition, PiecewiseConstant};
use crate::rho::{Term, TerminalFunctional};

const SUBSTEPS: usize = 20_000;

/// Law of `X(1)` given `X(0) = x0`: `e x0 + shift + N(0, cov)`.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    pub factor: f64,
    pub shift: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Mean of `X(1)` under the initial law.
    pub mean: DVector<f64>,
}

fn init_mean(init: &InitialCondition, dim: usize) -> DVector<f64> {
    match init {
        InitialCondition::Point(x) => DVector::from_column_slice(x),
        InitialCondition::Discrete(p) => {
            let mut s = DVector::zeros(dim);
            for x in p {
                s += DVector::from_column_slice(x);
            }
            s / p.len() as f64
        }
        InitialCondition::Normal { mean, .. } => DVector::from_column_slice(mean),
        InitialCondition::Uniform { lo, hi } => DVector::from_iterator(dim, lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b))),
    }
}

/// Mean path `m' = alpha + (beta + gamma) m` at `times` (sorted), for the
/// linear family; `None` for other drifts.
pub fn mean_path(spec: &DynamicsSpec, times: &[f64]) -> Option<Vec<DVector<f64>>> {
    let (alpha, beta, gamma) = tables(spec)?;
    let mut m = init_mean(&spec.init, spec.dim);
    let h = 1.0 / SUBSTEPS as f64;
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    for k in 0..=SUBSTEPS {
        let t = k as f64 * h;
        while next < times.len() && times[next] <= t + 0.5 * h {
            out.push(m.clone());
            next += 1;
        }
        if k == SUBSTEPS {
            break;
        }
        let tm = t + 0.5 * h;
        let (a, r) = (alpha.at(tm), beta.at(tm) + gamma.at(tm));
        // exact step for constant coefficients on the substep
        let decay = (r * h).exp();
        let gain = if r.abs() < 1e-14 { h } else { (decay - 1.0) / r };
        m = m.map(|v| v * decay + a * gain);
    }
    Some(out)
}

fn tables(spec: &DynamicsSpec) -> Option<(PiecewiseConstant, PiecewiseConstant, PiecewiseConstant)> {
    match &spec.drift {
        DriftSpec::Zero => Some((
            PiecewiseConstant::constant(0.0),
            PiecewiseConstant::constant(0.0),
            PiecewiseConstant::constant(0.0),
        )),
        DriftSpec::Linear { alpha, beta, gamma } => Some((
            PiecewiseConstant::new(alpha.clone()).ok()?,
            PiecewiseConstant::new(beta.clone()).ok()?,
            PiecewiseConstant::new(gamma.clone()).ok()?,
        )),
        DriftSpec::ClippedPolynomial { .. } => None,
    }
}

/// Law of `X(1)` for noise index `n`; `None` outside the linear family or
/// for state-dependent `sigma`.
pub fn linear_gaussian(spec: &DynamicsSpec, n: u32) -> Option<LinearGaussian> {
    if !spec.sigma_is_constant() {
        return None;
    }
    let (alpha, beta, gamma) = tables(spec)?;
    let m = spec.dim;
    let d = spec.noise_dim();
    let sigma = DMatrix::from_row_slice(m, d, &spec.sigma.iter().flatten().copied().collect::<Vec<_>>());
    let a = &sigma * sigma.transpose() / n as f64;
    let mut mean = init_mean(&spec.init, m);
    let mut e = 1.0;
    let mut c = DVector::zeros(m);
    let mut s = DMatrix::zeros(m, m);
    let h = 1.0 / SUBSTEPS as f64;
    for k in 0..SUBSTEPS {
        let tm = (k as f64 + 0.5) * h;
        let (al, b, g) = (alpha.at(tm), beta.at(tm), gamma.at(tm));
        // exponential integrators, exact for coefficients frozen on the substep
        let gain = |r: f64| if r.abs() < 1e-14 { h } else { ((r * h).exp() - 1.0) / r };
        let mid_mean = mean.map(|v| v * ((b + g) * 0.5 * h).exp() + al * gain(b + g) * 0.5);
        c = c.map(|v| v * (b * h).exp()) + (mid_mean.map(|v| g * v).add_scalar(al)) * gain(b);
        s = s * (2.0 * b * h).exp() + &a * gain(2.0 * b);
        e *= (b * h).exp();
        mean = mean.map(|v| v * ((b + g) * h).exp() + al * gain(b + g));
    }
    Some(LinearGaussian {
        factor: e,
        shift: c,
        cov: s,
        mean,
    })
}

/// Splits `F` into a constant and one payoff term covered by the closed forms.
fn split(f: &TerminalFunctional, law: &LinearGaussian) -> Option<(f64, Option<Term>)> {
    let mut constant = 0.0;
    let mut main = None;
    for t in f.terms() {
        match t {
            Term::Constant(c) => constant += c,
            Term::MeanLinear { coord, weight } => constant += weight * law.mean[*coord],
            Term::Polynomial { coeffs, clip: None, .. } if coeffs.len() <= 2 => {
                constant += coeffs.first().copied().unwrap_or(0.0);
                if coeffs.len() == 2 && coeffs[1] != 0.0 {
                    if main.is_some() {
                        return None;
                    }
                    main = Some(t.clone());
                }
            }
            Term::NegSquaredDistance { .. } => {
                if main.is_some() {
                    return None;
                }
                main = Some(t.clone());
            }
            _ => return None,
        }
    }
    Some((constant, main))
}

/// Initial states with weights, Gaussian spread per coordinate.
fn atoms(init: &InitialCondition) -> Option<Vec<(f64, Vec<f64>, Vec<f64>)>> {
    match init {
        InitialCondition::Point(x) => Some(vec![(1.0, x.clone(), vec![0.0; x.len()])]),
        InitialCondition::Discrete(p) => {
            let w = 1.0 / p.len() as f64;
            Some(p.iter().map(|x| (w, x.clone(), vec![0.0; x.len()])).collect())
        }
        InitialCondition::Normal { mean, sd } => Some(vec![(1.0, mean.clone(), sd.clone())]),
        InitialCondition::Uniform { .. } => None,
    }
}

/// `(1/n) log E[exp(n F(X(1), mu(1)))]` in closed form, when available.
pub fn log_mgf_reference(spec: &DynamicsSpec, f: &TerminalFunctional, n: u32) -> Option<f64> {
    let law = linear_gaussian(spec, n)?;
    let (constant, main) = split(f, &law)?;
    let Some(term) = main else {
        return Some(constant);
    };
    let nf = n as f64;
    let atoms = atoms(&spec.init)?;
    let m = spec.dim;
    // log E exp(n * term) as a log-sum over the atoms
    let mut logs = Vec::with_capacity(atoms.len());
    for (w, x0, sd) in atoms {
        let mu = DVector::from_column_slice(&x0) * law.factor + &law.shift;
        let mut cov = law.cov.clone();
        for i in 0..m {
            cov[(i, i)] += (law.factor * sd[i]).powi(2);
        }
        let l = match &term {
            Term::Polynomial { coord, coeffs, .. } => {
                let t = nf * coeffs[1];
                t * mu[*coord] + 0.5 * t * t * cov[(*coord, *coord)]
            }
            Term::NegSquaredDistance { weight, center } => {
                let k = DMatrix::identity(m, m) + &cov * (2.0 * nf * weight);
                let dev = &mu - DVector::from_column_slice(center);
                let sol = k.clone().lu().solve(&dev)?;
                -0.5 * k.determinant().ln() - nf * weight * dev.dot(&sol)
            }
            _ => unreachable!("split keeps only covered terms"),
        };
        logs.push(w.ln() + l);
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Some(constant + lse / nf)
}
