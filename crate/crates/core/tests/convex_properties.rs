use mfrisk::convex::{
    biconjugate, legendre_transform, pasch_hausdorff, truncate_pair, viscosity_scale, CostFunction, Extrapolation,
    GridSpec, GridTable,
};
use proptest::prelude::*;

fn cost(kind: u8, p: f64, scale: f64) -> CostFunction {
    match kind {
        0 => CostFunction::quadratic(1, scale).unwrap(),
        _ => CostFunction::power(1, p, scale).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn young_inequality_closed_form(kind in 0u8..2, p in 1.2f64..4.0, scale in 0.2f64..3.0,
                                    zs in prop::collection::vec(-5.0f64..5.0, 1..20),
                                    qs in prop::collection::vec(-5.0f64..5.0, 1..20)) {
        let f = cost(kind, p, scale);
        let g = GridSpec::symmetric(1, 5.0, 11).unwrap();
        let pair = legendre_transform(&f, &g, &g).unwrap();
        let zs: Vec<Vec<f64>> = zs.into_iter().map(|z| vec![z]).collect();
        let qs: Vec<Vec<f64>> = qs.into_iter().map(|q| vec![q]).collect();
        prop_assert!(pair.young_slack(0.0, &zs, &qs, &[0.0], &[0.0]) >= -1e-9);
    }

    #[test]
    fn young_inequality_on_grid(p in 1.5f64..4.0, a in 0.2f64..2.0, shift in -0.5f64..0.5,
                                zs in prop::collection::vec(-2.0f64..2.0, 1..20),
                                qs in prop::collection::vec(-3.0f64..3.0, 1..20)) {
        let primal = GridSpec::symmetric(1, 2.0, 201).unwrap();
        let dual = GridSpec::symmetric(1, 3.0, 301).unwrap();
        let table = GridTable::from_fn(primal.clone(), Extrapolation::Infinite, |z| a * (z[0] - shift).abs().powf(p)).unwrap();
        let pair = legendre_transform(&CostFunction::grid(table), &primal, &dual).unwrap();
        let zs: Vec<Vec<f64>> = zs.into_iter().map(|z| vec![z]).collect();
        let qs: Vec<Vec<f64>> = qs.into_iter().map(|q| vec![q]).collect();
        prop_assert!(pair.young_slack(0.0, &zs, &qs, &[0.0], &[0.0]) >= -1e-9);
    }

    #[test]
    fn truncations_are_ordered(kind in 0u8..2, p in 1.5f64..3.0, n in 0.5f64..3.0, extra in 0.1f64..3.0) {
        let g = cost(kind, p, 1.0);
        let domain = GridSpec::symmetric(1, 4.0, 161).unwrap();
        let lo = truncate_pair(&g, n, &domain).unwrap();
        let hi = truncate_pair(&g, n + extra, &domain).unwrap();
        let full = legendre_transform(&g, &domain, &domain).unwrap().dual;
        let h = domain.step(0);
        for i in 0..domain.len() {
            let z = domain.point(i);
            let (a, b) = (lo.primal.eval_z(0.0, &z), hi.primal.eval_z(0.0, &z));
            prop_assert!(a <= b + 1e-12, "f_n > f_n' at {z:?}");
            prop_assert!(b <= full.eval_z(0.0, &z) + 1e-9, "f_n' > f at {z:?}");
            // outside the ball the exact dual is infinite, which a bounded grid cannot see
            // and the grid sup loses at most h/2 (|z| + n) against the exact one,
            // as long as the maximizer g'(z) stays in the box
            let slope_in_box = if kind == 0 { z[0].abs() } else { z[0].abs().powf(p - 1.0) } <= 4.0;
            if z[0].abs() <= n && slope_in_box {
                let tol = 0.5 * h * (z[0].abs() + n) + 1e-9;
                prop_assert!(lo.dual.eval_z(0.0, &z) >= g.eval_z(0.0, &z) - tol);
            }
            if z[0].abs() <= n + extra && slope_in_box {
                let tol = 0.5 * h * (z[0].abs() + n + extra) + 1e-9;
                prop_assert!(hi.dual.eval_z(0.0, &z) >= g.eval_z(0.0, &z) - tol);
            }
            if i > 0 {
                let slope = (a - lo.primal.eval_z(0.0, &domain.point(i - 1))).abs() / h;
                prop_assert!(slope <= n + 1e-9, "slope {slope} above {n}");
            }
        }
    }

    #[test]
    fn biconjugate_is_idempotent(values in prop::collection::vec(-2.0f64..2.0, 41)) {
        let primal = GridSpec::symmetric(1, 2.0, 41).unwrap();
        let dual = GridSpec::symmetric(1, 50.0, 1001).unwrap();
        let f = CostFunction::grid(GridTable::new(primal.clone(), values, Extrapolation::Infinite).unwrap());
        let once = biconjugate(&f, &primal, &dual).unwrap();
        let twice = biconjugate(&once, &primal, &dual).unwrap();
        for i in 0..primal.len() {
            let z = primal.point(i);
            prop_assert!((once.eval_z(0.0, &z) - twice.eval_z(0.0, &z)).abs() <= 1e-12);
            prop_assert!(once.eval_z(0.0, &z) <= f.eval_z(0.0, &z) + 1e-12);
        }
    }

    #[test]
    fn envelope_is_lipschitz_and_below(values in prop::collection::vec(-3.0f64..3.0, 3..60), m in 0.1f64..5.0) {
        let spec = GridSpec::symmetric(1, 1.5, values.len()).unwrap();
        let table = GridTable::new(spec.clone(), values.clone(), Extrapolation::Linear).unwrap();
        let env = pasch_hausdorff(&table, m).unwrap();
        let h = spec.step(0);
        for i in 0..values.len() {
            prop_assert!(env.values[i] <= values[i]);
            if i > 0 {
                prop_assert!((env.values[i] - env.values[i - 1]).abs() <= m * h * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn viscosity_scaling_undoes_input_scaling(kind in 0u8..2, p in 1.2f64..4.0, n in 1i64..200, q in -4.0f64..4.0) {
        let g = cost(kind, p, 1.3);
        let gn = viscosity_scale(&g, n).unwrap();
        let v = gn.eval_z(0.0, &[(n as f64).sqrt() * q]);
        prop_assert!((v - g.eval_z(0.0, &[q])).abs() <= 1e-12 * (1.0 + v.abs()));
    }
}
