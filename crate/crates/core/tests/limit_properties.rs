use mfrisk::convex::CostFunction;
use mfrisk::limit::{action_value, integrate_ode, maximize_action, rate_function, ActionOptions, ControlVector};
use mfrisk::particles::{CoefficientSet, Diffusion, Drift, PiecewiseConstant, TimeGrid};
use mfrisk::rho::TerminalFunctional;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Drift `alpha(t)` without state dependence.
fn state_free(alpha: Vec<f64>, sigma: &[f64], m: usize, d: usize) -> CoefficientSet {
    let drift = Drift::Linear {
        alpha: vec![PiecewiseConstant::new(alpha).unwrap(); m],
        beta: PiecewiseConstant::constant(0.0),
        gamma: PiecewiseConstant::constant(0.0),
    };
    CoefficientSet::new(drift, Diffusion::Constant(DMatrix::from_row_slice(m, d, sigma)), 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rate_never_exceeds_the_control_energy(phi in prop::collection::vec(-2.0f64..2.0, 10),
                                             sigma in prop::collection::vec(-1.5f64..1.5, 2),
                                             alpha in prop::collection::vec(-1.0f64..1.0, 2)) {
        // m = 1, d = 2: sigma has full row rank unless both entries vanish
        prop_assume!(sigma.iter().map(|s| s * s).sum::<f64>() > 0.05);
        let c = state_free(alpha, &sigma, 1, 2);
        let grid = TimeGrid::unit(40).unwrap();
        let control = ControlVector::new(2, phi).unwrap();
        let path = integrate_ode(&c, &grid, &[0.2], &control).unwrap();
        let rate = rate_function(&c, &grid, &path).unwrap();
        prop_assert!(rate.value <= 0.5 * control.energy(0.0) + 1e-9);
    }

    #[test]
    fn rate_equals_energy_for_square_sigma(phi in prop::collection::vec(-2.0f64..2.0, 5), s in 0.3f64..2.0) {
        let c = state_free(vec![0.3], &[s], 1, 1);
        let grid = TimeGrid::unit(40).unwrap();
        let control = ControlVector::new(1, phi).unwrap();
        let path = integrate_ode(&c, &grid, &[0.0], &control).unwrap();
        let rate = rate_function(&c, &grid, &path).unwrap();
        prop_assert!((rate.value - 0.5 * control.energy(0.0)).abs() <= 1e-9);
    }

    #[test]
    fn action_cost_is_refinement_invariant(phi in prop::collection::vec(-2.0f64..2.0, 5), k in 1usize..6) {
        let c = CoefficientSet::linear_1d(0.1, -0.5, 0.0, 1.0, 1).unwrap();
        let f = TerminalFunctional::linear(1.0);
        let g = CostFunction::power(1, 1.5, 1.0).unwrap();
        let control = ControlVector::new(1, phi).unwrap();
        let coarse = TimeGrid::unit(5 * k).unwrap();
        let fine = TimeGrid::unit(10 * k).unwrap();
        let a = action_value(&integrate_ode(&c, &coarse, &[0.0], &control).unwrap(), &control, &f, &g).unwrap();
        let b = action_value(&integrate_ode(&c, &fine, &[0.0], &control).unwrap(), &control, &f, &g).unwrap();
        prop_assert!((a.cost - b.cost).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn maximum_beats_the_zero_control(center in -2.0f64..2.0, beta in -1.0f64..1.0, x0 in -1.0f64..1.0) {
        let c = CoefficientSet::linear_1d(0.0, beta, 0.0, 1.0, 1).unwrap();
        let grid = TimeGrid::unit(50).unwrap();
        let f = TerminalFunctional::neg_squared_distance(1.0, vec![center]);
        let g = CostFunction::quadratic(1, 1.0).unwrap();
        let opts = ActionOptions { max_evaluations: 2000, restarts: 2, ..ActionOptions::default() };
        let best = maximize_action(&c, &grid, &[x0], &f, &g, &opts).unwrap();
        let zero = ControlVector::zeros(1, opts.cells);
        let base = action_value(&integrate_ode(&c, &grid, &[x0], &zero).unwrap(), &zero, &f, &g).unwrap();
        prop_assert!(best.value.total >= base.total - 1e-12);
    }
}
