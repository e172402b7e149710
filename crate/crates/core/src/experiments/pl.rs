//! Prekopa-Leindler inequality for the law of a linear McKean-Vlasov diffusion.
//!
//! Triples of Gaussian bumps `l_i(x) = exp(-a_i |x - c_i|^2 + o_i)` with
//! `c_3 = (1 - lambda) c_1 + lambda c_2` and `o_3 = (1 - lambda) o_1 + lambda o_2`
//! satisfy `l_3((1 - lambda) x + lambda y) >= l_1(x)^(1 - lambda) l_2(y)^lambda`
//! exactly when `a_3 <= 1 / ((1 - lambda) / a_1 + lambda / a_2)`.

use rayon::prelude::*;

use super::config::{DriftSpec, ExperimentConfig, ExperimentKind};
use super::report::{Comparison, ExperimentReport, ReportRow, Rule};
use super::{config_error, ExperimentOutcome};
use crate::error::{invalid, Error, Result};
use crate::particles::{simulate_mckv_with, Retention, TimeGrid};
use crate::rho::log_mean_exp;
use crate::rng::{derive_seed, NormalStream};

/// Probe pairs per admissibility test.
pub const PROBE_PAIRS: usize = 4096;
/// Half-width of the probe box.
pub const PROBE_BOX: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BumpTriple {
    pub lambda: f64,
    pub widths: [f64; 3],
    pub centers: [Vec<f64>; 3],
    pub offsets: [f64; 3],
}

impl BumpTriple {
    /// Completes `c_3` and `o_3` from the first two bumps.
    pub fn new(lambda: f64, widths: [f64; 3], c1: Vec<f64>, c2: Vec<f64>, o1: f64, o2: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(invalid("lambda must lie in (0, 1)"));
        }
        if c1.len() != c2.len() || widths.iter().any(|a| !(*a > 0.0)) {
            return Err(invalid("bump triple needs positive widths and centers of one dimension"));
        }
        let c3 = c1.iter().zip(&c2).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
        Ok(Self {
            lambda,
            widths,
            centers: [c1, c2, c3],
            offsets: [o1, o2, (1.0 - lambda) * o1 + lambda * o2],
        })
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    /// `log l_i(x)`
    pub fn log_bump(&self, i: usize, x: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(&self.centers[i]).map(|(a, b)| (a - b).powi(2)).sum();
        -self.widths[i] * d2 + self.offsets[i]
    }

    /// Largest width of the third bump for which the condition holds.
    pub fn critical_width(&self) -> f64 {
        let [a1, a2, _] = self.widths;
        1.0 / ((1.0 - self.lambda) / a1 + self.lambda / a2)
    }

    /// Largest violation of the condition, in logs, over random pairs in the probe box.
    pub fn probe_violation(&self, pairs: usize, seed: u64) -> f64 {
        let m = self.dim();
        let stream = NormalStream::new(seed);
        let l = self.lambda;
        let mut x = vec![0.0; m];
        let mut y = vec![0.0; m];
        let mut z = vec![0.0; m];
        let mut worst = f64::NEG_INFINITY;
        for p in 0..pairs as u64 {
            for i in 0..m {
                let (u, v) = stream.uniform_pair(p, i as u32, 0);
                x[i] = PROBE_BOX * (2.0 * u - 1.0);
                y[i] = PROBE_BOX * (2.0 * v - 1.0);
                z[i] = (1.0 - l) * x[i] + l * y[i];
            }
            let lhs = self.log_bump(2, &z);
            let rhs = (1.0 - l) * self.log_bump(0, &x) + l * self.log_bump(1, &y);
            worst = worst.max(rhs - lhs);
        }
        worst
    }

    pub fn is_admissible(&self, seed: u64) -> bool {
        self.probe_violation(PROBE_PAIRS, seed) <= 1e-12
    }
}

/// Sample averages of the three bumps over `points` (row-major, `dim` columns).
pub fn bump_integrals(t: &BumpTriple, points: &[f64]) -> [f64; 3] {
    let m = t.dim();
    let count = (points.len() / m) as f64;
    let sums = points
        .par_chunks(m)
        .fold(
            || [0.0; 3],
            |mut acc, x| {
                for (i, a) in acc.iter_mut().enumerate() {
                    *a += t.log_bump(i, x).exp();
                }
                acc
            },
        )
        .reduce(|| [0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
    sums.map(|s| s / count)
}

/// `(I_3 - I_1^(1 - lambda) I_2^lambda) / (I_1^(1 - lambda) I_2^lambda)`
pub fn relative_slack(t: &BumpTriple, integrals: [f64; 3]) -> f64 {
    let rhs = integrals[0].powf(1.0 - t.lambda) * integrals[1].powf(t.lambda);
    (integrals[2] - rhs) / rhs
}

/// Values `rho(log l_i)` by log-mean-exp at noise index `n`, and the relative
/// slack of `rho(log l_3) >= (1 - lambda) rho(log l_1) + lambda rho(log l_2)`.
pub fn rho_slack(t: &BumpTriple, points: &[f64], n: u32) -> Result<([f64; 3], f64)> {
    let m = t.dim();
    let mut rho = [0.0; 3];
    for (i, r) in rho.iter_mut().enumerate() {
        let values: Vec<f64> = points.par_chunks(m).map(|x| t.log_bump(i, x)).collect();
        *r = log_mean_exp(&values, n as f64)?.0;
    }
    let rhs = (1.0 - t.lambda) * rho[0] + t.lambda * rho[1];
    Ok((rho, (rho[2] - rhs) / rhs.abs().max(1.0)))
}

/// Draws a triple: widths in `[0.25, 2]`, centers in `[-2, 2]^m`, offsets in
/// `[-1, 1]` and `a_3` a random multiple in `[0.5, 1.25]` of the critical width.
fn draw_triple(lambda: f64, m: usize, stream: &NormalStream, attempt: u64) -> Result<BumpTriple> {
    let (u1, u2) = stream.uniform_pair(attempt, 0, 0);
    let (u3, u4) = stream.uniform_pair(attempt, 0, 1);
    let (u5, _) = stream.uniform_pair(attempt, 0, 2);
    let mut c1 = Vec::with_capacity(m);
    let mut c2 = Vec::with_capacity(m);
    for i in 0..m {
        let (a, b) = stream.uniform_pair(attempt, 1 + i as u32, 0);
        c1.push(4.0 * a - 2.0);
        c2.push(4.0 * b - 2.0);
    }
    let (a1, a2) = (0.25 + 1.75 * u1, 0.25 + 1.75 * u2);
    let mut t = BumpTriple::new(lambda, [a1, a2, 1.0], c1, c2, 2.0 * u3 - 1.0, 2.0 * u4 - 1.0)?;
    t.widths[2] = t.critical_width() * (0.5 + 0.75 * u5);
    Ok(t)
}

fn is_time_homogeneous(cfg: &ExperimentConfig) -> bool {
    match &cfg.dynamics.drift {
        DriftSpec::Zero => true,
        DriftSpec::Linear { alpha, beta, gamma } => [alpha, beta, gamma].iter().all(|v| v.windows(2).all(|w| w[0] == w[1])),
        DriftSpec::ClippedPolynomial { .. } => true,
    }
}

pub fn run_pl_check(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let kind = ExperimentKind::Pl;
    let run = &cfg.run;
    if !matches!(cfg.dynamics.drift, DriftSpec::Zero | DriftSpec::Linear { .. }) {
        return Err(config_error("[dynamics] the pl check needs a linear drift"));
    }
    if !cfg.dynamics.sigma_is_constant() {
        return Err(config_error("[dynamics] the pl check needs a constant sigma"));
    }
    let coeffs = cfg.dynamics.coefficients(run.noise_index)?;
    coeffs.check_ellipticity(1e-10)?;
    let grid = if run.pl_time >= 1.0 {
        TimeGrid::unit(run.steps)?
    } else {
        if !is_time_homogeneous(cfg) {
            return Err(config_error("[run] pl_time < 1 needs time-constant drift tables"));
        }
        TimeGrid::new(1.0 - run.pl_time, run.steps)?
    };
    let m = coeffs.state_dim();
    let ens = simulate_mckv_with(&coeffs, &grid, &cfg.dynamics.init, run.particles, None, derive_seed(run.seed, 1), Retention::Final)?;
    let points = ens.final_states();
    let rho_form = cfg.cost.is_standard_quadratic();

    let mut report = ExperimentReport::new(kind, "log-concavity of the law at a fixed time under linear drift", cfg);
    let tol = report.tolerance("slack");
    let mut table = String::from("lambda,triple,a1,a2,a3,c1,c2,c3,i1,i2,i3,slack,rho_slack\n");
    for (li, &lambda) in run.pl_lambdas.iter().enumerate() {
        let stream = NormalStream::new(derive_seed(run.seed, 100 + li as u64));
        let mut accepted = 0;
        let mut rejected = 0usize;
        let mut attempt = 0u64;
        let mut worst = f64::INFINITY;
        let mut worst_rho = f64::INFINITY;
        while accepted < run.pl_triples {
            if attempt as usize >= 100 * run.pl_triples.max(1) {
                return Err(Error::Infeasible(format!("too few admissible triples for lambda = {lambda}")));
            }
            let t = draw_triple(lambda, m, &stream, attempt)?;
            attempt += 1;
            if !t.is_admissible(derive_seed(run.seed, 1000 + attempt)) {
                rejected += 1;
                continue;
            }
            let integrals = bump_integrals(&t, points);
            let slack = relative_slack(&t, integrals);
            worst = worst.min(slack);
            let rs = if rho_form && accepted < run.pl_rho_triples {
                let (_, s) = rho_slack(&t, points, run.noise_index)?;
                worst_rho = worst_rho.min(s);
                s.to_string()
            } else {
                String::new()
            };
            let join = |c: &Vec<f64>| c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
            table.push_str(&format!(
                "{lambda},{accepted},{},{},{},{},{},{},{},{},{},{slack},{rs}\n",
                t.widths[0],
                t.widths[1],
                t.widths[2],
                join(&t.centers[0]),
                join(&t.centers[1]),
                join(&t.centers[2]),
                integrals[0],
                integrals[1],
                integrals[2],
            ));
            accepted += 1;
        }
        let label = format!("min slack lambda={lambda}");
        report
            .rows
            .push(ReportRow::new(label.clone(), "shared-sample", worst).particles(run.particles));
        report
            .rows
            .push(ReportRow::new(format!("rejected lambda={lambda}"), "probe", rejected as f64));
        report.check(&label, Rule::Value { row: label.clone() }, Comparison::AtLeast, -tol);
        if rho_form && run.pl_rho_triples > 0 {
            let label = format!("min rho slack lambda={lambda}");
            report
                .rows
                .push(ReportRow::new(label.clone(), "log-mean-exp", worst_rho).n(run.noise_index).particles(run.particles));
            report.check(&label, Rule::Value { row: label.clone() }, Comparison::AtLeast, -tol);
        }
    }
    if !rho_form {
        report
            .notes
            .push("the rho form is checked only for the penalty |q|^2 / 2".into());
    }
    report.notes.push(format!(
        "{} admissible triples per lambda; rejected draws failed the condition on {PROBE_PAIRS} probe pairs",
        run.pl_triples
    ));
    Ok(ExperimentOutcome {
        report,
        artifacts: vec![("pl_triples.csv".into(), table)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_width_is_sharp() {
        let mut t = BumpTriple::new(0.3, [1.0, 2.0, 1.0], vec![-1.0], vec![0.5], 0.0, 0.0).unwrap();
        let a = t.critical_width();
        t.widths[2] = a;
        assert!(t.is_admissible(1));
        t.widths[2] = 1.05 * a;
        assert!(!t.is_admissible(1));
    }

    #[test]
    fn equal_bumps_give_equal_integrals() {
        let t = BumpTriple::new(0.5, [1.0; 3], vec![0.3], vec![0.3], 0.0, 0.0).unwrap();
        let pts: Vec<f64> = (0..1000).map(|i| i as f64 / 250.0 - 2.0).collect();
        let i = bump_integrals(&t, &pts);
        assert!((i[0] - i[2]).abs() < 1e-12 && (i[1] - i[2]).abs() < 1e-12);
        assert!(relative_slack(&t, i).abs() < 1e-12);
    }
}
