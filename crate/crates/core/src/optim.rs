//! Derivative-free local optimizers used by the control problems.
//!
//! Both routines minimize; callers maximizing an objective negate it. A
//! non-finite objective value is treated as `+inf` (rejected point).

/// Outcome of a local minimization.
#[derive(Debug, Clone)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// `(iteration, best value)` after each iteration.
    pub trace: Vec<(usize, f64)>,
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Settings for [`nelder_mead`].
#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    pub initial_step: f64,
    /// Stop when the spread of simplex values falls below this.
    pub value_tolerance: f64,
    /// Stop when the simplex diameter falls below this.
    pub size_tolerance: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 20_000,
            initial_step: 0.5,
            value_tolerance: 1e-12,
            size_tolerance: 1e-9,
        }
    }
}

/// Nelder-Mead with dimension-adaptive coefficients (Gao and Han, 2012).
///
/// When the simplex collapses before the evaluation budget is spent the
/// search restarts around the incumbent with a fresh simplex; this guards
/// against the stagnation the method is known for in higher dimensions.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> LocalResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };
    if n == 0 {
        let v = eval(x0, &mut evals);
        return LocalResult {
            x: Vec::new(),
            value: v,
            evaluations: evals,
            trace: vec![(0, v)],
        };
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n > 1 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut best_x = x0.to_vec();
    let mut best_v = eval(x0, &mut evals);
    let mut trace = vec![(0, best_v)];
    let mut iteration = 0usize;
    let mut step = opts.initial_step;

    'restart: while evals < opts.max_evaluations {
        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut values: Vec<f64> = Vec::with_capacity(n + 1);
        simplex.push(best_x.clone());
        values.push(best_v);
        for i in 0..n {
            let mut p = best_x.clone();
            p[i] += step;
            let v = eval(&p, &mut evals);
            simplex.push(p);
            values.push(v);
        }
        let restart_from = best_v;

        loop {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();
            if values[0] < best_v {
                best_v = values[0];
                best_x = simplex[0].clone();
            }
            iteration += 1;
            trace.push((iteration, best_v));

            let spread = values[n] - values[0];
            let diameter = simplex[1..]
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(&simplex[0])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            let converged = (spread.is_finite() && spread <= opts.value_tolerance)
                || diameter <= opts.size_tolerance;
            if converged || evals >= opts.max_evaluations {
                if evals < opts.max_evaluations && restart_from - best_v > opts.value_tolerance {
                    step = (diameter * 10.0).max(opts.size_tolerance * 100.0).min(opts.initial_step);
                    continue 'restart;
                }
                break 'restart;
            }

            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / nf)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let xr = along(alpha);
            let fr = eval(&xr, &mut evals);
            if fr < values[0] {
                let xe = along(beta);
                let fe = eval(&xe, &mut evals);
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
            } else if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
            } else {
                let (xc, fc) = if fr < values[n] {
                    let xc = along(gamma);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(-gamma);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                };
                if fc < values[n].min(fr) {
                    simplex[n] = xc;
                    values[n] = fc;
                } else {
                    for i in 1..=n {
                        let p: Vec<f64> = simplex[0]
                            .iter()
                            .zip(&simplex[i])
                            .map(|(b, x)| b + delta * (x - b))
                            .collect();
                        values[i] = eval(&p, &mut evals);
                        simplex[i] = p;
                    }
                }
            }
        }
    }

    LocalResult {
        x: best_x,
        value: best_v,
        evaluations: evals,
        trace,
    }
}

/// Settings for [`bfgs_fd`].
#[derive(Debug, Clone)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    pub max_evaluations: usize,
    /// Central-difference half step.
    pub fd_step: f64,
    pub gradient_tolerance: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 60,
            max_evaluations: 4_000,
            fd_step: 1e-3,
            gradient_tolerance: 1e-7,
        }
    }
}

/// Quasi-Newton minimization with central finite-difference gradients.
///
/// Intended for Monte Carlo objectives evaluated with common random numbers,
/// where the objective is a smooth deterministic function of the parameters
/// once the noise is frozen.
pub fn bfgs_fd<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> LocalResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };
    let mut x = x0.to_vec();
    let mut fx = eval(&x, &mut evals);
    let mut trace = vec![(0, fx)];
    if n == 0 || !fx.is_finite() {
        return LocalResult {
            x,
            value: fx,
            evaluations: evals,
            trace,
        };
    }

    let gradient = |x: &[f64], evals: &mut usize, eval: &mut dyn FnMut(&[f64], &mut usize) -> f64| {
        let mut g = vec![0.0; n];
        let mut probe = x.to_vec();
        for i in 0..n {
            let h = opts.fd_step * (1.0 + x[i].abs());
            probe[i] = x[i] + h;
            let up = eval(&probe, evals);
            probe[i] = x[i] - h;
            let down = eval(&probe, evals);
            probe[i] = x[i];
            g[i] = if up.is_finite() && down.is_finite() {
                (up - down) / (2.0 * h)
            } else {
                0.0
            };
        }
        g
    };

    let mut g = gradient(&x, &mut evals, &mut eval);
    // Inverse Hessian approximation, row-major.
    let mut h = identity(n);
    for iteration in 1..=opts.max_iterations {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= opts.gradient_tolerance || evals >= opts.max_evaluations {
            break;
        }
        let mut dir: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if slope >= 0.0 {
            h = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let ft = eval(&trial, &mut evals);
            if ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if h != identity(n) {
                h = identity(n);
                continue;
            }
            break;
        };
        let g_new = gradient(&x_new, &mut evals, &mut eval);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * s.iter().map(|v| v * v).sum::<f64>().sqrt() * y.iter().map(|v| v * v).sum::<f64>().sqrt() {
            if iteration == 1 {
                let yy: f64 = y.iter().map(|v| v * v).sum();
                let scale = sy / yy;
                h.iter_mut().for_each(|v| *v *= scale);
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
                .collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push((iteration, fx));
        if improvement.abs() <= 1e-14 * (1.0 + fx.abs()) {
            break;
        }
    }

    LocalResult {
        x,
        value: fx,
        evaluations: evals,
        trace,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}
