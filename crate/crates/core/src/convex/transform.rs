//! Legendre transforms, truncation and scaling of costs.

use super::{
    ConjugatePair, CostFunction, CostKind, Extrapolation, GridMetadata, GridSpec, GridTable, Provenance,
    TimeModulation,
};
use crate::error::{invalid, Result};

/// Convex conjugate `g(q) = sup_z (q.z - f(z))` of `f` in its z-argument.
///
/// Closed-form kinds are conjugated exactly. Sampled kinds are checked for
/// convexity and transformed by a discrete maximum over the nodes of `primal`,
/// tabulated on `dual`. Dual nodes whose maximizer lies on the boundary of
/// `primal` are counted as box-clipped in the metadata.
pub fn legendre_transform(f: &CostFunction, primal: &GridSpec, dual: &GridSpec) -> Result<ConjugatePair> {
    check_dims(f, primal, dual)?;
    if f.is_closed_form() {
        return Ok(ConjugatePair {
            primal: f.clone(),
            dual: closed_conjugate(f),
            provenance: Provenance::ClosedForm,
            grid: None,
        });
    }
    f.check_convexity()?;
    numeric_pair(f, primal, dual)
}

/// `f**` on `primal`, using `dual` as the intermediate grid. Non-convex
/// sampled input is accepted and yields its convex envelope.
pub fn biconjugate(f: &CostFunction, primal: &GridSpec, dual: &GridSpec) -> Result<CostFunction> {
    check_dims(f, primal, dual)?;
    if f.is_closed_form() {
        return Ok(f.clone());
    }
    let first = numeric_pair(f, primal, dual)?;
    let second = numeric_pair(&first.dual, dual, primal)?;
    let mut out = second.dual;
    if let Some(table) = match &mut out.kind {
        CostKind::Grid(t) => Some(t),
        _ => None,
    } {
        table.extrapolation = match &f.kind {
            CostKind::Grid(t) => t.extrapolation,
            _ => Extrapolation::Linear,
        };
    }
    Ok(out)
}

/// Truncation ladder element: `f_n(z) = max_{|q| <= n} (q.z - g(q))` sampled on
/// `domain`, paired with `g_n`, the discrete conjugate of `f_n` on the same
/// grid.
pub fn truncate_pair(g: &CostFunction, n: f64, domain: &GridSpec) -> Result<ConjugatePair> {
    if !(n > 0.0) || n.is_nan() {
        return Err(invalid(format!("truncation radius must be positive, got {n}")));
    }
    if domain.dim() != g.dim {
        return Err(invalid("domain dimension does not match the cost"));
    }
    if g.time != TimeModulation::None {
        return Err(invalid("truncation of time-dependent costs is not supported"));
    }
    let origin = vec![0.0; g.dim];
    let g0 = g.eval_z(0.0, &origin);
    if g0.abs() > 1e-9 {
        return Err(invalid(format!("truncation needs g(0) = 0, got {g0}")));
    }
    let folded = fold(g);
    let fn_values: Vec<f64> = match &folded.kind {
        CostKind::Quadratic { scale } => radial_truncation(domain, 2.0, *scale, n),
        CostKind::Power { exponent, scale } => radial_truncation(domain, *exponent, *scale, n),
        CostKind::Grid(table) => {
            let qgrid = table.spec.scaled(1.0 / folded.input_scale);
            let qvals: Vec<f64> = (0..qgrid.len())
                .map(|i| {
                    let q = qgrid.point(i);
                    let r = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if r <= n * (1.0 + 1e-12) {
                        folded.eval_z(0.0, &q)
                    } else {
                        f64::INFINITY
                    }
                })
                .collect();
            discrete_conjugate(&qgrid, &qvals, domain).0
        }
    };
    let fn_table = GridTable::new(domain.clone(), fn_values, Extrapolation::Linear)?;
    let (gn_values, clipped) = discrete_conjugate(domain, &fn_table.values, domain);
    let gn_table = GridTable::new(domain.clone(), gn_values, Extrapolation::Infinite)?;
    let mut primal = CostFunction::grid(fn_table);
    primal.offset = g.offset.as_ref().map(|o| o.negated());
    let mut dual = CostFunction::grid(gn_table);
    dual.offset = g.offset.clone();
    Ok(ConjugatePair {
        primal,
        dual,
        provenance: Provenance::NumericGrid,
        grid: Some(GridMetadata {
            dual_grid: domain.clone(),
            box_clipped: clipped.iter().filter(|&&c| c).count(),
        }),
    })
}

/// `q -> g(t, q / sqrt(n), x, mu)`.
pub fn viscosity_scale(g: &CostFunction, n: i64) -> Result<CostFunction> {
    if n <= 0 {
        return Err(invalid(format!("viscosity index must be a positive integer, got {n}")));
    }
    let mut out = g.clone();
    out.input_scale *= 1.0 / (n as f64).sqrt();
    Ok(fold(&out))
}

fn check_dims(f: &CostFunction, primal: &GridSpec, dual: &GridSpec) -> Result<()> {
    if primal.dim() != f.dim || dual.dim() != f.dim {
        return Err(invalid(format!(
            "grid dimensions ({}, {}) do not match cost dimension {}",
            primal.dim(),
            dual.dim(),
            f.dim
        )));
    }
    Ok(())
}

/// Moves the input scale of a closed-form kind into its coefficient.
fn fold(f: &CostFunction) -> CostFunction {
    let mut out = f.clone();
    let s = f.input_scale;
    if s == 1.0 {
        return out;
    }
    match &mut out.kind {
        CostKind::Quadratic { scale } => *scale *= s * s,
        CostKind::Power { exponent, scale } => *scale *= s.powf(*exponent),
        CostKind::Grid(_) => return out,
    }
    out.input_scale = 1.0;
    out
}

fn closed_conjugate(f: &CostFunction) -> CostFunction {
    let folded = fold(f);
    let kind = match folded.kind {
        CostKind::Quadratic { scale } => CostKind::Quadratic { scale: 1.0 / scale },
        CostKind::Power { exponent, scale } => CostKind::Power {
            exponent: exponent / (exponent - 1.0),
            scale: scale.powf(-1.0 / (exponent - 1.0)),
        },
        CostKind::Grid(_) => unreachable!("closed_conjugate called on a sampled cost"),
    };
    CostFunction {
        dim: f.dim,
        kind,
        input_scale: 1.0,
        time: swap_time(&f.time),
        offset: f.offset.as_ref().map(|o| o.negated()),
    }
}

fn swap_time(t: &TimeModulation) -> TimeModulation {
    match t {
        TimeModulation::None => TimeModulation::None,
        TimeModulation::Scale(w) => TimeModulation::Perspective(w.clone()),
        TimeModulation::Perspective(w) => TimeModulation::Scale(w.clone()),
    }
}

/// Smallest box containing `spec / w` for every weight `w`.
fn divided_hull(spec: &GridSpec, weights: &[f64]) -> GridSpec {
    let wmin = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let wmax = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = spec.lo.iter().map(|&l| (l / wmin).min(l / wmax)).collect();
    let hi = spec.hi.iter().map(|&h| (h / wmin).max(h / wmax)).collect();
    GridSpec {
        lo,
        hi,
        points: spec.points.clone(),
    }
}

/// Samples the time-free z-part `h(s z)` on `grid`.
fn sample_base(f: &CostFunction, grid: &GridSpec) -> Vec<f64> {
    if let CostKind::Grid(t) = &f.kind {
        if f.input_scale == 1.0 && &t.spec == grid {
            return t.values.clone();
        }
    }
    let mut base = f.clone();
    base.time = TimeModulation::None;
    base.offset = None;
    (0..grid.len()).map(|i| base.eval_z(0.0, &grid.point(i))).collect()
}

/// Numeric conjugate of `w h(s z / w^e) + f2` (see the module docs of
/// `convex`): the base `k(u) = h(s u)` is transformed on a grid and the time
/// modulation swaps form.
fn numeric_pair(f: &CostFunction, primal: &GridSpec, dual: &GridSpec) -> Result<ConjugatePair> {
    let (base_grid, table_grid) = match &f.time {
        TimeModulation::None => (primal.clone(), dual.clone()),
        TimeModulation::Scale(w) => (primal.clone(), divided_hull(dual, w.values())),
        TimeModulation::Perspective(w) => (divided_hull(primal, w.values()), dual.clone()),
    };
    let values = sample_base(f, &base_grid);
    let (conj, clipped) = discrete_conjugate(&base_grid, &values, &table_grid);
    let table = GridTable::new(table_grid.clone(), conj, Extrapolation::Linear)?;
    let dual_cost = CostFunction {
        dim: f.dim,
        kind: CostKind::Grid(table),
        input_scale: 1.0,
        time: swap_time(&f.time),
        offset: f.offset.as_ref().map(|o| o.negated()),
    };
    Ok(ConjugatePair {
        primal: f.clone(),
        dual: dual_cost,
        provenance: Provenance::NumericGrid,
        grid: Some(GridMetadata {
            dual_grid: table_grid,
            box_clipped: clipped.iter().filter(|&&c| c).count(),
        }),
    })
}

fn radial_truncation(domain: &GridSpec, p: f64, c: f64, n: f64) -> Vec<f64> {
    (0..domain.len())
        .map(|i| {
            let r = domain.point(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            let rho = (r / c).powf(1.0 / (p - 1.0)).min(n);
            rho * r - c / p * rho.powf(p)
        })
        .collect()
}

/// Discrete conjugate `g(q) = max_{z in primal} (q.z - f(z))` for every node
/// `q` of `dual`, computed axis by axis with a lower-hull sweep per line.
/// `+inf` entries of `values` are ignored. The second output marks dual nodes
/// whose maximizer touches the boundary of `primal`.
pub(crate) fn discrete_conjugate(primal: &GridSpec, values: &[f64], dual: &GridSpec) -> (Vec<f64>, Vec<bool>) {
    let dim = primal.dim();
    // a holds -(partial supremum); starting from f itself.
    let mut shape = primal.points.clone();
    let mut a = values.to_vec();
    let mut clipped = vec![false; a.len()];
    let mut hull = Vec::new();
    let mut line_y = Vec::new();
    let mut line_out = Vec::new();
    let mut line_arg = Vec::new();
    for axis in 0..dim {
        let xs = primal.axis_coords(axis);
        let qs = dual.axis_coords(axis);
        let n_in = shape[axis];
        let n_out = qs.len();
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut next = vec![0.0; outer * n_out * inner];
        let mut next_clip = vec![false; next.len()];
        line_out.resize(n_out, 0.0);
        line_arg.resize(n_out, 0);
        for o in 0..outer {
            for i in 0..inner {
                let src = |j: usize| (o * n_in + j) * inner + i;
                line_y.clear();
                line_y.extend((0..n_in).map(|j| a[src(j)]));
                conj_line(&xs, &line_y, &qs, &mut hull, &mut line_out, &mut line_arg);
                for (k, (&v, &arg)) in line_out.iter().zip(&line_arg).enumerate() {
                    let dst = (o * n_out + k) * inner + i;
                    next[dst] = -v;
                    next_clip[dst] = arg == usize::MAX || arg == 0 || arg + 1 == n_in || clipped[src(arg)];
                }
            }
        }
        shape[axis] = n_out;
        a = next;
        clipped = next_clip;
    }
    for v in &mut a {
        *v = -*v;
    }
    (a, clipped)
}

/// `out[k] = max_j (q[k] x[j] - y[j])` for increasing `x` and `q`, with the
/// maximizing index in `arg` (`usize::MAX` when every `y` is infinite).
fn conj_line(x: &[f64], y: &[f64], q: &[f64], hull: &mut Vec<usize>, out: &mut [f64], arg: &mut [usize]) {
    hull.clear();
    for j in 0..x.len() {
        if !y[j].is_finite() {
            continue;
        }
        while hull.len() >= 2 {
            let i0 = hull[hull.len() - 2];
            let i1 = hull[hull.len() - 1];
            let cross = (x[i1] - x[i0]) * (y[j] - y[i0]) - (y[i1] - y[i0]) * (x[j] - x[i0]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(j);
    }
    if hull.is_empty() {
        out.fill(f64::NEG_INFINITY);
        arg.fill(usize::MAX);
        return;
    }
    let mut p = 0;
    for (k, &qk) in q.iter().enumerate() {
        while p + 1 < hull.len() {
            let cur = qk * x[hull[p]] - y[hull[p]];
            let nxt = qk * x[hull[p + 1]] - y[hull[p + 1]];
            if nxt > cur {
                p += 1;
            } else {
                break;
            }
        }
        out[k] = qk * x[hull[p]] - y[hull[p]];
        arg[k] = hull[p];
    }
}
