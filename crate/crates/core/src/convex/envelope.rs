//! Lipschitz lower envelopes.

use rayon::prelude::*;

use super::GridTable;
use crate::error::{invalid, Result};

/// `F_m(x) = min_y (F(y) + m |x - y|)` over the nodes of the table.
pub fn pasch_hausdorff(table: &GridTable, m: f64) -> Result<GridTable> {
    if table.values.is_empty() {
        return Err(invalid("empty table"));
    }
    if !(m > 0.0) || m.is_nan() {
        return Err(invalid(format!("envelope slope must be positive, got {m}")));
    }
    if table.values.iter().any(|v| *v == f64::NEG_INFINITY) {
        return Err(invalid("table is not bounded below"));
    }
    let spec = &table.spec;
    let values = if spec.dim() == 1 {
        let h = spec.step(0);
        let mut v = table.values.clone();
        for i in 1..v.len() {
            v[i] = v[i].min(v[i - 1] + m * h);
        }
        for i in (0..v.len() - 1).rev() {
            v[i] = v[i].min(v[i + 1] + m * h);
        }
        v
    } else {
        let points: Vec<Vec<f64>> = (0..spec.len()).map(|i| spec.point(i)).collect();
        points
            .par_iter()
            .map(|x| {
                points
                    .iter()
                    .zip(&table.values)
                    .map(|(y, fy)| {
                        let d = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                        fy + m * d
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    GridTable::new(spec.clone(), values, table.extrapolation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::{Extrapolation, GridSpec};

    #[test]
    fn lipschitz_input_is_unchanged() {
        let spec = GridSpec::symmetric(1, 2.0, 41).unwrap();
        let t = GridTable::from_fn(spec, Extrapolation::Linear, |x| x[0].sin()).unwrap();
        let e = pasch_hausdorff(&t, 2.0).unwrap();
        assert_eq!(e.values, t.values);
    }

    #[test]
    fn step_function_envelope() {
        let spec = GridSpec::symmetric(1, 2.0, 81).unwrap();
        let t = GridTable::from_fn(spec.clone(), Extrapolation::Linear, |x| if x[0] < 0.0 { 0.0 } else { 1.0 }).unwrap();
        let e = pasch_hausdorff(&t, 1.0).unwrap();
        let h = spec.step(0);
        for i in 0..spec.len() {
            let x = spec.coord(0, i);
            let want = if x < 0.0 { 0.0 } else { x.min(1.0) };
            // on the grid the nearest zero sits one step to the left of x = 0
            let discrete = if x < 0.0 { 0.0 } else { (x + h).min(1.0) };
            assert!((e.values[i] - discrete).abs() < 1e-12, "x={x}");
            assert!((e.values[i] - want).abs() <= h + 1e-12);
        }
    }

    #[test]
    fn constant_is_invariant_in_two_dimensions() {
        let spec = GridSpec::symmetric(2, 1.0, 9).unwrap();
        let t = GridTable::from_fn(spec, Extrapolation::Linear, |_| 3.5).unwrap();
        for m in [0.1, 1.0, 7.0] {
            assert!(pasch_hausdorff(&t, m).unwrap().values.iter().all(|&v| v == 3.5));
        }
    }

    #[test]
    fn rejects_nonpositive_slope() {
        let spec = GridSpec::symmetric(1, 1.0, 3).unwrap();
        let t = GridTable::from_fn(spec, Extrapolation::Linear, |_| 0.0).unwrap();
        assert!(pasch_hausdorff(&t, 0.0).is_err());
    }
}
