use mfrisk::convex::{CostFunction, Extrapolation, GridSpec, GridTable};
use mfrisk::particles::{simulate_mckv_with, CoefficientSet, ControlField, InitialCondition, Retention, TimeGrid};
use mfrisk::rho::{
    bsde_lsmc, evaluate_control, mean_ci, rho_log_mgf_mc, RegressionBasisSpec, TerminalFunctional,
};
use proptest::prelude::*;

fn brownian() -> (CoefficientSet, TimeGrid, InitialCondition) {
    (
        CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap(),
        TimeGrid::unit(32).unwrap(),
        InitialCondition::Point(vec![0.0]),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_controls_never_beat_the_primal(theta in prop::collection::vec(-2.0f64..2.0, 4), seed in 0u64..1000) {
        let (c, grid, init) = brownian();
        let f = TerminalFunctional::linear(1.0);
        let g = CostFunction::quadratic(1, 1.0).unwrap();
        let ens = simulate_mckv_with(&c, &grid, &init, 50_000, None, seed, Retention::Final).unwrap();
        let primal = rho_log_mgf_mc(&f, &ens, 1).unwrap();
        let control = ControlField::open_loop(1, 4, theta).unwrap();
        let (j, ci) = evaluate_control(&f, &c, &grid, &init, &g, &control, 20_000, seed + 1).unwrap();
        prop_assert!(j <= primal.value + 3.0 * ci.hypot(primal.ci));
    }

    #[test]
    fn constants_pass_through(shift in -3.0f64..3.0, n in 1u32..20, seed in 0u64..1000) {
        let c = CoefficientSet::linear_1d(0.0, -0.5, 0.0, 1.0, n).unwrap();
        let grid = TimeGrid::unit(16).unwrap();
        let f = TerminalFunctional::neg_squared_distance(1.0, vec![0.5]);
        let ens = simulate_mckv_with(&c, &grid, &InitialCondition::Point(vec![0.0]), 5000, None, seed, Retention::Final).unwrap();
        let a = rho_log_mgf_mc(&f, &ens, n).unwrap();
        let b = rho_log_mgf_mc(&f.shifted(shift), &ens, n).unwrap();
        prop_assert!((b.value - a.value - shift).abs() <= 1e-12 * (1.0 + shift.abs()));
    }

    #[test]
    fn estimates_are_monotone_in_the_payoff(w in 0.0f64..1.0, n in 1u32..10, seed in 0u64..1000) {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, n).unwrap();
        let grid = TimeGrid::unit(16).unwrap();
        let ens = simulate_mckv_with(&c, &grid, &InitialCondition::Point(vec![0.0]), 5000, None, seed, Retention::Final).unwrap();
        let low = rho_log_mgf_mc(&TerminalFunctional::neg_squared_distance(1.0, vec![1.0]), &ens, n).unwrap();
        let high = rho_log_mgf_mc(&TerminalFunctional::neg_squared_distance(w, vec![1.0]), &ens, n).unwrap();
        prop_assert!(low.value <= high.value + 3.0 * low.ci.hypot(high.ci));
    }

    #[test]
    fn log_mgf_matches_a_direct_log_mean_exp(n in 1u32..64, seed in 0u64..1000) {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, n).unwrap();
        let grid = TimeGrid::unit(8).unwrap();
        let f = TerminalFunctional::neg_squared_distance(1.0, vec![1.0]);
        let ens = simulate_mckv_with(&c, &grid, &InitialCondition::Point(vec![0.0]), 1000, None, seed, Retention::Final).unwrap();
        let est = rho_log_mgf_mc(&f, &ens, n).unwrap();
        let nf = n as f64;
        let values: Vec<f64> = ens.final_states().iter().map(|x| -(x - 1.0) * (x - 1.0)).collect();
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().map(|v| (nf * (v - max)).exp()).sum::<f64>() / values.len() as f64;
        prop_assert_eq!(est.value, max + mean.ln() / nf);
    }
}

#[test]
fn zero_generator_is_the_plain_mean() {
    let (c, grid, init) = brownian();
    let f = TerminalFunctional::tanh();
    let spec = GridSpec::symmetric(1, 1.0, 3).unwrap();
    let zero = CostFunction::grid(GridTable::from_fn(spec, Extrapolation::Linear, |_| 0.0).unwrap());
    let r = bsde_lsmc(&f, &c, &grid, &init, &zero, &RegressionBasisSpec::default(), 20_000, 9).unwrap();
    let ens = simulate_mckv_with(&c, &grid, &init, 20_000, None, 10, Retention::Final).unwrap();
    let values: Vec<f64> = ens.final_states().iter().map(|x| f.eval(&[*x], &[0.0])).collect();
    let (mean, ci) = mean_ci(&values);
    assert!((r.value - mean).abs() <= 3.0 * ci.hypot(r.ci), "{} vs {mean}", r.value);
}
