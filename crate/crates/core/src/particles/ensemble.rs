//! Euler-Maruyama simulation of the interacting particle system.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::measure::{mean_of, EmpiricalMeasure};
use super::{CoefficientSet, ControlField, TimeGrid};
use crate::convex::CostFunction;
use crate::error::{invalid, Error, Result};
use crate::rng::{NormalStream, INIT_STEP};

/// Law of the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    Point(Vec<f64>),
    /// Uniform on finitely many points; particle `i` starts at point `i mod k`.
    Discrete(Vec<Vec<f64>>),
    /// Independent normals with the given means and standard deviations.
    Normal { mean: Vec<f64>, sd: Vec<f64> },
    /// Independent uniforms on `[lo, hi]`.
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
}

impl InitialCondition {
    pub fn dim(&self) -> usize {
        match self {
            InitialCondition::Point(x) => x.len(),
            InitialCondition::Discrete(p) => p.first().map_or(0, |x| x.len()),
            InitialCondition::Normal { mean, .. } => mean.len(),
            InitialCondition::Uniform { lo, .. } => lo.len(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            InitialCondition::Point(_) => true,
            InitialCondition::Discrete(p) => p.len() == 1,
            InitialCondition::Normal { sd, .. } => sd.iter().all(|&s| s == 0.0),
            InitialCondition::Uniform { lo, hi } => lo == hi,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            InitialCondition::Point(x) => x.len() == dim,
            InitialCondition::Discrete(p) => !p.is_empty() && p.iter().all(|x| x.len() == dim),
            InitialCondition::Normal { mean, sd } => {
                mean.len() == dim && sd.len() == dim && sd.iter().all(|&s| s >= 0.0)
            }
            InitialCondition::Uniform { lo, hi } => {
                lo.len() == dim && hi.len() == dim && lo.iter().zip(hi).all(|(a, b)| a <= b)
            }
        };
        if !ok {
            return Err(invalid(format!("initial condition does not fit state dimension {dim}")));
        }
        Ok(())
    }

    /// Draws `particles` initial states (row-major).
    pub fn sample(&self, dim: usize, particles: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate(dim)?;
        let stream = NormalStream::new(seed);
        let mut out = vec![0.0; particles * dim];
        out.par_chunks_mut(dim).enumerate().for_each(|(i, x)| match self {
            InitialCondition::Point(p) => x.copy_from_slice(p),
            InitialCondition::Discrete(pts) => x.copy_from_slice(&pts[i % pts.len()]),
            InitialCondition::Normal { mean, sd } => {
                stream.fill(i as u64, INIT_STEP, x);
                for c in 0..dim {
                    x[c] = mean[c] + sd[c] * x[c];
                }
            }
            InitialCondition::Uniform { lo, hi } => {
                for c in 0..dim {
                    let (u, _) = stream.uniform_pair(i as u64, INIT_STEP, c as u32);
                    x[c] = lo[c] + (hi[c] - lo[c]) * u;
                }
            }
        });
        Ok(out)
    }
}

/// Which time nodes an ensemble keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Retention {
    All,
    Final,
}

/// Pre-drawn standard normals, indexed by `(step, particle, component)`.
#[derive(Debug, Clone)]
pub struct NoiseTable {
    particles: usize,
    steps: usize,
    dim: usize,
    values: Vec<f64>,
}

impl NoiseTable {
    /// The same numbers the counter stream of `seed` would produce.
    pub fn draw(seed: u64, particles: usize, steps: usize, dim: usize) -> Self {
        let stream = NormalStream::new(seed);
        let mut values = vec![0.0; particles * steps * dim];
        values.par_chunks_mut(dim).enumerate().for_each(|(idx, z)| {
            let (k, i) = (idx / particles, idx % particles);
            stream.fill(i as u64, k as u32, z);
        });
        Self {
            particles,
            steps,
            dim,
            values,
        }
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    fn get(&self, particle: usize, step: usize) -> &[f64] {
        let base = (step * self.particles + particle) * self.dim;
        &self.values[base..base + self.dim]
    }
}

/// Source of the Brownian increments.
#[derive(Debug, Clone, Copy)]
pub enum Noise<'a> {
    Counter(NormalStream),
    Table(&'a NoiseTable),
}

impl Noise<'_> {
    #[inline]
    fn fill(&self, particle: usize, step: usize, out: &mut [f64]) {
        match self {
            Noise::Counter(s) => s.fill(particle as u64, step as u32, out),
            Noise::Table(t) => out.copy_from_slice(t.get(particle, step)),
        }
    }
}

/// Particle states at the retained time nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub grid: TimeGrid,
    pub dim: usize,
    pub particles: usize,
    pub seed: u64,
    pub noise_index: u32,
    pub init: InitialCondition,
    /// Retained node indices, increasing, always ending at `grid.steps()`.
    pub nodes: Vec<usize>,
    /// One row-major `particles x dim` block per retained node.
    pub states: Vec<Vec<f64>>,
}

impl ParticleEnsemble {
    pub fn final_states(&self) -> &[f64] {
        self.states.last().expect("ensemble has a final node")
    }

    pub fn states_at(&self, k: usize) -> Result<&[f64]> {
        if k > self.grid.steps() {
            return Err(invalid(format!("time index {k} outside 0..={}", self.grid.steps())));
        }
        match self.nodes.binary_search(&k) {
            Ok(pos) => Ok(&self.states[pos]),
            Err(_) => Err(invalid(format!("time index {k} was not retained"))),
        }
    }

    /// Uniform point cloud of the states at node `k`.
    pub fn empirical_measure(&self, k: usize) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::new(self.dim, self.states_at(k)?.to_vec())
    }

    pub fn final_measure(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.dim, self.final_states().to_vec()).expect("non-empty ensemble")
    }

    /// CSV with columns `particle,time,x1..xm`, one row per particle and retained node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|c| format!("x{c}")).collect();
        writeln!(out, "particle,time,{}", header.join(","))?;
        for (pos, &k) in self.nodes.iter().enumerate() {
            let t = self.grid.node(k);
            for (i, x) in self.states[pos].chunks_exact(self.dim).enumerate() {
                let xs: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
                writeln!(out, "{i},{t},{}", xs.join(","))?;
            }
        }
        Ok(())
    }
}

/// Above this many stored numbers the default retention drops to the final node.
const DEFAULT_RETENTION_BUDGET: usize = 1 << 24;

/// Simulates the particle system
///
/// ```text
/// X_{k+1} = X_k + [b(t_k, X_k, L_k) + sigma(t_k, X_k, L_k) q_k] dt
///               + n^{-1/2} sigma(t_k, X_k, L_k) sqrt(dt) Z_k
/// ```
///
/// with `L_k` the empirical measure of the current states. All nodes are kept
/// when that fits in about 128 MiB, otherwise only the final one; use
/// [`simulate_mckv_with`] to choose.
pub fn simulate_mckv(
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    init: &InitialCondition,
    particles: usize,
    control: Option<&ControlField>,
    seed: u64,
) -> Result<ParticleEnsemble> {
    let stored = particles * (grid.steps() + 1) * coeffs.state_dim();
    let retention = if stored <= DEFAULT_RETENTION_BUDGET {
        Retention::All
    } else {
        Retention::Final
    };
    simulate_mckv_with(coeffs, grid, init, particles, control, seed, retention)
}

pub fn simulate_mckv_with(
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    init: &InitialCondition,
    particles: usize,
    control: Option<&ControlField>,
    seed: u64,
    retention: Retention,
) -> Result<ParticleEnsemble> {
    if particles == 0 {
        return Err(invalid("need at least one particle"));
    }
    let x0 = init.sample(coeffs.state_dim(), particles, seed)?;
    let run = Simulation {
        coeffs,
        grid: *grid,
        control,
        noise: Noise::Counter(NormalStream::new(seed)),
        penalty: None,
    }
    .run(x0, retention)?;
    Ok(ParticleEnsemble {
        grid: *grid,
        dim: coeffs.state_dim(),
        particles,
        seed,
        noise_index: coeffs.noise_index(),
        init: init.clone(),
        nodes: run.nodes,
        states: run.states,
    })
}

/// Output of [`Simulation::run`].
pub(crate) struct Run {
    pub nodes: Vec<usize>,
    pub states: Vec<Vec<f64>>,
    /// Per-particle `sum_k g(t_k, q_k, X_k, L_k) dt` when a penalty was given.
    pub penalty: Option<Vec<f64>>,
}

pub(crate) struct Simulation<'a> {
    pub coeffs: &'a CoefficientSet,
    pub grid: TimeGrid,
    pub control: Option<&'a ControlField>,
    pub noise: Noise<'a>,
    pub penalty: Option<&'a CostFunction>,
}

const CHUNK: usize = 512;

impl Simulation<'_> {
    pub fn run(&self, mut x: Vec<f64>, retention: Retention) -> Result<Run> {
        let m = self.coeffs.state_dim();
        let d = self.coeffs.noise_dim();
        let particles = x.len() / m;
        if let Some(c) = self.control {
            c.validate_for(&self.grid, m, d, particles)?;
        }
        if let Noise::Table(t) = self.noise {
            if t.particles != particles || t.steps < self.grid.steps() || t.dim != d {
                return Err(invalid("noise table does not match the simulation"));
            }
        }
        if let Some(g) = self.penalty {
            if g.dim() != d {
                return Err(invalid("penalty dimension does not match the noise dimension"));
            }
        }
        let dt = self.grid.dt();
        let noise_scale = (dt / self.coeffs.noise_index() as f64).sqrt();
        let sigma = self.coeffs.sigma_rows();
        let noisy = sigma.iter().any(|&v| v != 0.0);
        let steps = self.grid.steps();
        let mut nodes = Vec::new();
        let mut states = Vec::new();
        if retention == Retention::All {
            nodes.push(0);
            states.push(x.clone());
        }
        let mut cost = self.penalty.map(|_| vec![0.0; particles]);
        let mut dummy = Vec::new();
        for k in 0..steps {
            let t = self.grid.node(k);
            let mean = mean_of(&x, m);
            let cell = self.control.map_or(0, |c| self.grid.cell_of_step(k, c.cells()));
            let cost_slice: &mut [f64] = match cost.as_mut() {
                Some(c) => c,
                None => {
                    dummy.resize(particles, 0.0);
                    &mut dummy
                }
            };
            let bad = x
                .par_chunks_mut(CHUNK * m)
                .zip(cost_slice.par_chunks_mut(CHUNK))
                .enumerate()
                .map(|(chunk, (xs, cs))| {
                    let mut b = vec![0.0; m];
                    let mut q = vec![0.0; d];
                    let mut z = vec![0.0; d];
                    let mut bad = false;
                    for (j, (xi, ci)) in xs.chunks_exact_mut(m).zip(cs.iter_mut()).enumerate() {
                        let i = chunk * CHUNK + j;
                        self.coeffs.drift_at(t, xi, &mean, &mut b);
                        let factor = self.coeffs.sigma_factor(xi, &mean);
                        match self.control {
                            Some(c) => c.eval(cell, i, xi, &mut q),
                            None => q.fill(0.0),
                        }
                        if let Some(g) = self.penalty {
                            *ci += g.eval(t, &q, xi, &mean) * dt;
                        }
                        if noisy {
                            self.noise.fill(i, k, &mut z);
                        }
                        for r in 0..m {
                            let row = &sigma[r * d..(r + 1) * d];
                            let mut s = 0.0;
                            for c in 0..d {
                                s += row[c] * (q[c] * dt + noise_scale * z[c]);
                            }
                            xi[r] += b[r] * dt + factor * s;
                            bad |= !xi[r].is_finite();
                        }
                    }
                    bad
                })
                .reduce(|| false, |a, b| a || b);
            if bad {
                return Err(Error::NonFiniteState { step: k });
            }
            if retention == Retention::All || k + 1 == steps {
                nodes.push(k + 1);
                states.push(x.clone());
            }
        }
        if let Some(c) = &cost {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(invalid("running penalty is not finite along the simulated paths"));
            }
        }
        Ok(Run {
            nodes,
            states,
            penalty: cost,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particles::Drift;

    #[test]
    fn frozen_dynamics() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 0.0, 1).unwrap();
        let g = TimeGrid::unit(10).unwrap();
        let e = simulate_mckv(&c, &g, &InitialCondition::Point(vec![1.0]), 5, None, 1).unwrap();
        assert_eq!(e.nodes.len(), 11);
        assert!(e.states.iter().all(|s| s.iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn exponential_decay() {
        let c = CoefficientSet::linear_1d(0.0, -1.0, 0.0, 0.0, 1).unwrap();
        let g = TimeGrid::unit(1000).unwrap();
        let e = simulate_mckv(&c, &g, &InitialCondition::Point(vec![1.0]), 3, None, 1).unwrap();
        assert!((e.final_states()[0] - (-1.0f64).exp()).abs() < 2e-3);
    }

    #[test]
    fn mean_field_growth() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 1.0, 0.0, 1).unwrap();
        let g = TimeGrid::unit(1000).unwrap();
        let e = simulate_mckv(&c, &g, &InitialCondition::Point(vec![1.0]), 10, None, 1).unwrap();
        assert!((e.final_measure().mean()[0] - std::f64::consts::E).abs() < 1e-2);
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let c = CoefficientSet::linear_1d(0.1, -0.5, 0.3, 1.0, 2).unwrap();
        let g = TimeGrid::unit(20).unwrap();
        let init = InitialCondition::Normal {
            mean: vec![0.0],
            sd: vec![1.0],
        };
        let a = simulate_mckv(&c, &g, &init, 2000, None, 42).unwrap();
        let b = simulate_mckv(&c, &g, &init, 2000, None, 42).unwrap();
        let other = simulate_mckv(&c, &g, &init, 2000, None, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.final_states(), other.final_states());
    }

    #[test]
    fn noise_table_matches_counter_stream() {
        let c = CoefficientSet::linear_1d(0.0, -1.0, 0.0, 1.0, 1).unwrap();
        let g = TimeGrid::unit(8).unwrap();
        let x0 = vec![0.5; 700];
        let table = NoiseTable::draw(9, 700, 8, 1);
        let sim = |noise| Simulation {
            coeffs: &c,
            grid: g,
            control: None,
            noise,
            penalty: None,
        };
        let a = sim(Noise::Counter(NormalStream::new(9))).run(x0.clone(), Retention::Final).unwrap();
        let b = sim(Noise::Table(&table)).run(x0, Retention::Final).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn overflow_reports_step() {
        let c = CoefficientSet::linear_1d(0.0, 1e200, 0.0, 0.0, 1).unwrap();
        let g = TimeGrid::unit(10).unwrap();
        let err = simulate_mckv(&c, &g, &InitialCondition::Point(vec![1.0]), 2, None, 1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { step: 1 }), "{err:?}");
    }

    #[test]
    fn controlled_drift_and_penalty() {
        let c = CoefficientSet::linear_1d(0.0, 0.0, 0.0, 1.0, 1).unwrap();
        let g = TimeGrid::unit(4).unwrap();
        let ctrl = ControlField::open_loop(1, 2, vec![1.0, -2.0]).unwrap();
        let pen = CostFunction::quadratic(1, 1.0).unwrap();
        let table = NoiseTable {
            particles: 1,
            steps: 4,
            dim: 1,
            values: vec![0.0; 4],
        };
        let run = Simulation {
            coeffs: &c,
            grid: g,
            control: Some(&ctrl),
            noise: Noise::Table(&table),
            penalty: Some(&pen),
        }
        .run(vec![0.0], Retention::Final)
        .unwrap();
        assert!((run.states[0][0] - (0.5 - 1.0)).abs() < 1e-15);
        assert!((run.penalty.unwrap()[0] - (0.5 * 0.5 + 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn stratified_discrete_init_and_normal_moments() {
        let init = InitialCondition::Discrete(vec![vec![-1.0], vec![1.0]]);
        let x = init.sample(1, 5, 0).unwrap();
        assert_eq!(x, vec![-1.0, 1.0, -1.0, 1.0, -1.0]);
        let normal = InitialCondition::Normal {
            mean: vec![0.0],
            sd: vec![1.0],
        };
        let x = normal.sample(1, 10_000, 3).unwrap();
        let m = EmpiricalMeasure::new(1, x).unwrap();
        assert!(m.mean()[0].abs() < 3.0 / 100.0);
        assert!(InitialCondition::Point(vec![0.0, 1.0]).sample(1, 1, 0).is_err());
    }

    #[test]
    fn csv_layout() {
        let c = CoefficientSet::new(Drift::Zero, crate::particles::Diffusion::scalar(0.0), 1).unwrap();
        let g = TimeGrid::unit(2).unwrap();
        let e = simulate_mckv(&c, &g, &InitialCondition::Point(vec![3.0]), 2, None, 1).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "particle,time,x1");
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert!(e.states_at(3).is_err());
        assert_eq!(e.empirical_measure(1).unwrap().mean(), vec![3.0]);
    }
}
