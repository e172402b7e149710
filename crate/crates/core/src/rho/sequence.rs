//! Truncation ladders and duality gaps.

use serde::{Deserialize, Serialize};

use super::dual::{rho_dual_lower, DualBudget};
use super::estimate::{rho_log_mgf_mc, RhoEstimate};
use super::lsmc::{bsde_lsmc, RegressionBasisSpec};
use super::TerminalFunctional;
use crate::convex::{truncate_pair, CostFunction, CostKind, GridSpec};
use crate::error::{invalid, Result};
use crate::particles::{simulate_mckv_with, CoefficientSet, ControlField, InitialCondition, Retention, TimeGrid};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationMethod {
    /// Backward regression with the truncated conjugate as generator.
    Lsmc,
    /// Dual optimization over controls capped at the truncation radius.
    Dual,
}

/// Settings shared by the rungs of a truncation ladder.
#[derive(Debug, Clone)]
pub struct LadderOptions {
    pub lsmc_particles: usize,
    pub basis: RegressionBasisSpec,
    /// Nodes per axis of the grid carrying the truncated conjugate.
    pub domain_points: usize,
    pub dual_budget: DualBudget,
    pub template: ControlField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Constant,
    Nondecreasing,
    Nonincreasing,
    Mixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderRung {
    pub radius: f64,
    pub estimate: RhoEstimate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncatedSequence {
    pub rungs: Vec<LadderRung>,
    /// Direction of the raw values.
    pub trend: Trend,
    /// No rung falls below its predecessor by more than twice the combined half-width.
    pub nondecreasing_within_2ci: bool,
}

/// Radius of the box carrying `f_R` so that the truncation saturates inside it.
fn domain_radius(g: &CostFunction, radius: f64) -> f64 {
    match g.kind() {
        CostKind::Quadratic { scale } => 1.25 * scale * radius / g.input_scale().powi(2) + 1.0,
        CostKind::Power { exponent, scale } => {
            1.25 * scale * g.input_scale().powf(-exponent) * radius.powf(exponent - 1.0) + 1.0
        }
        CostKind::Grid(_) => 1.5 * radius + 2.0,
    }
}

/// `rho^{g_R}` for each truncation radius `R` in `radii`, on common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn rho_truncated_sequence(
    f: &TerminalFunctional,
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    init: &InitialCondition,
    g: &CostFunction,
    radii: &[f64],
    method: TruncationMethod,
    opts: &LadderOptions,
    seed: u64,
) -> Result<TruncatedSequence> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("truncation radii must be non-empty and strictly increasing"));
    }
    let d = coeffs.noise_dim();
    let mut rungs = Vec::with_capacity(radii.len());
    for &r in radii {
        let estimate = match method {
            TruncationMethod::Lsmc => {
                let domain = GridSpec::symmetric(d, domain_radius(g, r), opts.domain_points)?;
                let pair = truncate_pair(g, r, &domain)?;
                bsde_lsmc(f, coeffs, grid, init, &pair.primal, &opts.basis, opts.lsmc_particles, seed)?
            }
            TruncationMethod::Dual => {
                let template = opts.template.clone().with_cap(r)?;
                rho_dual_lower(f, coeffs, grid, init, g, &template, &opts.dual_budget, seed)?.estimate
            }
        };
        rungs.push(LadderRung { radius: r, estimate });
    }
    let values: Vec<f64> = rungs.iter().map(|r| r.estimate.value).collect();
    let up = values.windows(2).all(|w| w[1] >= w[0]);
    let down = values.windows(2).all(|w| w[1] <= w[0]);
    let trend = match (up, down) {
        (true, true) => Trend::Constant,
        (true, false) => Trend::Nondecreasing,
        (false, true) => Trend::Nonincreasing,
        (false, false) => Trend::Mixed,
    };
    let nondecreasing_within_2ci = rungs.windows(2).all(|w| {
        let (a, b) = (&w[0].estimate, &w[1].estimate);
        b.value >= a.value - 2.0 * a.ci.hypot(b.ci)
    });
    Ok(TruncatedSequence {
        rungs,
        trend,
        nondecreasing_within_2ci,
    })
}

/// Primal value, dual lower bound and their difference for the quadratic penalty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub primal: RhoEstimate,
    pub dual: RhoEstimate,
    /// `primal - dual`
    pub gap: f64,
    pub combined_ci: f64,
    /// `gap >= -3 * combined_ci`
    pub certificate_holds: bool,
}

/// Compares the log-mean-exp value with the dual lower bound. Only the
/// standard quadratic penalty has the log-mean-exp primal.
#[allow(clippy::too_many_arguments)]
pub fn dual_gap_report(
    f: &TerminalFunctional,
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    init: &InitialCondition,
    g: &CostFunction,
    primal_particles: usize,
    template: &ControlField,
    budget: &DualBudget,
    seed: u64,
) -> Result<GapReport> {
    if !g.is_standard_quadratic() {
        return Err(invalid("the duality gap needs the penalty |q|^2 / 2"));
    }
    let ens = simulate_mckv_with(coeffs, grid, init, primal_particles, None, derive_seed(seed, 10), Retention::Final)?;
    let primal = rho_log_mgf_mc(f, &ens, coeffs.noise_index())?;
    let dual = rho_dual_lower(f, coeffs, grid, init, g, template, budget, derive_seed(seed, 11))?.estimate;
    let gap = primal.value - dual.value;
    let combined_ci = primal.ci.hypot(dual.ci);
    Ok(GapReport {
        certificate_holds: gap >= -3.0 * combined_ci,
        primal,
        dual,
        gap,
        combined_ci,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> LadderOptions {
        LadderOptions {
            lsmc_particles: 5000,
            basis: RegressionBasisSpec::default(),
            domain_points: 401,
            dual_budget: DualBudget {
                train_particles: 256,
                validation_particles: 5000,
                starts: 1,
                ..DualBudget::default()
            },
            template: ControlField::zero_open_loop(1, 2).unwrap(),
        }
    }

    #[test]
    fn constant_payoff_gives_constant_ladder() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let grid = TimeGrid::unit(8).unwrap();
        let g = CostFunction::quadratic(1, 1.0).unwrap();
        let f = TerminalFunctional::constant(-0.3);
        for method in [TruncationMethod::Lsmc, TruncationMethod::Dual] {
            let s = rho_truncated_sequence(&f, &c, &grid, &InitialCondition::Point(vec![0.0]), &g, &[1.0, 2.0], method, &opts(), 1)
                .unwrap();
            assert!(s.rungs.iter().all(|r| (r.estimate.value + 0.3).abs() < 1e-12), "{s:?}");
        }
    }

    #[test]
    fn radii_must_increase() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let grid = TimeGrid::unit(8).unwrap();
        let g = CostFunction::quadratic(1, 1.0).unwrap();
        let f = TerminalFunctional::constant(0.0);
        let r = rho_truncated_sequence(&f, &c, &grid, &InitialCondition::Point(vec![0.0]), &g, &[2.0, 1.0], TruncationMethod::Dual, &opts(), 1);
        assert!(r.is_err());
    }

    #[test]
    fn gap_needs_standard_quadratic() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let grid = TimeGrid::unit(8).unwrap();
        let g = CostFunction::quadratic(1, 2.0).unwrap();
        let f = TerminalFunctional::constant(0.0);
        let o = opts();
        let r = dual_gap_report(&f, &c, &grid, &InitialCondition::Point(vec![0.0]), &g, 100, &o.template, &o.dual_budget, 1);
        assert!(r.is_err());
    }

    #[test]
    fn constant_payoff_has_zero_gap() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let grid = TimeGrid::unit(8).unwrap();
        let g = CostFunction::quadratic(1, 1.0).unwrap();
        let f = TerminalFunctional::constant(1.5);
        let o = opts();
        let r = dual_gap_report(&f, &c, &grid, &InitialCondition::Point(vec![0.0]), &g, 1000, &o.template, &o.dual_budget, 1)
            .unwrap();
        assert_eq!(r.gap, 0.0);
        assert!(r.certificate_holds);
    }
}
