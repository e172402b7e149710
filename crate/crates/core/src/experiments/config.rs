//! Declarative experiment configs.
//!
//! A config is a TOML document restricted to four tables, `[dynamics]`,
//! `[cost]`, `[terminal]` and `[run]`, each holding flat `key = value`
//! pairs. Every problem found while reading is reported with its line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Spanned, Value};

use crate::convex::{CostFunction, OffsetKind};
use crate::error::{Diagnostic, Error, Result};
use crate::particles::{CoefficientSet, ControlField, Diffusion, Drift, InitialCondition, PiecewiseConstant};
use crate::rho::{BasisFamily, DualBudget, RegressionBasisSpec, Term, TerminalFunctional};

pub const DEFAULT_STEPS: usize = 512;
pub const DEFAULT_PARTICLES: usize = 200_000;
/// Extra particles per unit of `n` in the scaled schedule.
pub const PARTICLES_PER_N: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Gibbs,
    Fw,
    Vanish,
    Chaos,
    Pl,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [Self::Gibbs, Self::Fw, Self::Vanish, Self::Chaos, Self::Pl];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gibbs => "gibbs",
            Self::Fw => "fw",
            Self::Vanish => "vanish",
            Self::Chaos => "chaos",
            Self::Pl => "pl",
        }
    }

    /// Tolerances the experiment declares, with their defaults.
    pub fn default_tolerances(self) -> &'static [(&'static str, f64)] {
        match self {
            Self::Gibbs => &[("reference", 2e-2), ("dual_gap", 2e-2), ("lsmc", 2e-2), ("certificate_ci", 3.0)],
            Self::Fw => &[("final_gap", 4e-2), ("inversions", 1.0)],
            Self::Vanish => &[("final_gap", 5e-2), ("trend_ci", 2.0), ("random_init", 5e-2)],
            Self::Chaos => &[("slope_max", -0.3), ("slope_min", -0.7)],
            Self::Pl => &[("slack", 1e-6)],
        }
    }

    fn default_ladder(self) -> Vec<u32> {
        match self {
            Self::Fw => vec![1, 2, 4, 8, 16, 32],
            Self::Vanish => vec![1, 4, 16, 64],
            _ => vec![1],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}` (expected gibbs, fw, vanish, chaos or pl)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    Zero,
    /// Piecewise-constant tables on equal cells of `[0, 1]`.
    Linear {
        alpha: Vec<f64>,
        beta: Vec<f64>,
        gamma: Vec<f64>,
    },
    ClippedPolynomial {
        coeffs: Vec<f64>,
        mean_weight: f64,
        clip: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSpec {
    pub dim: usize,
    pub drift: DriftSpec,
    /// Row-major `dim x noise_dim`.
    pub sigma: Vec<Vec<f64>>,
    /// `(amplitude, frequency)` of a state-dependent modulation of `sigma`.
    pub modulation: Option<(f64, f64)>,
    pub init: InitialCondition,
    pub lipschitz: Option<f64>,
}

impl DynamicsSpec {
    pub fn noise_dim(&self) -> usize {
        self.sigma.first().map_or(0, |r| r.len())
    }

    pub fn coefficients(&self, n: u32) -> Result<CoefficientSet> {
        let drift = match &self.drift {
            DriftSpec::Zero => Drift::Zero,
            DriftSpec::Linear { alpha, beta, gamma } => Drift::Linear {
                alpha: vec![PiecewiseConstant::new(alpha.clone())?; self.dim],
                beta: PiecewiseConstant::new(beta.clone())?,
                gamma: PiecewiseConstant::new(gamma.clone())?,
            },
            DriftSpec::ClippedPolynomial {
                coeffs,
                mean_weight,
                clip,
            } => Drift::ClippedPolynomial {
                coeffs: coeffs.clone(),
                mean_weight: *mean_weight,
                clip: *clip,
            },
        };
        let flat: Vec<f64> = self.sigma.iter().flatten().copied().collect();
        let base = DMatrix::from_row_slice(self.dim, self.noise_dim(), &flat);
        let diffusion = match self.modulation {
            None => Diffusion::Constant(base),
            Some((amplitude, frequency)) => Diffusion::Modulated {
                base,
                amplitude,
                frequency,
            },
        };
        let c = CoefficientSet::new(drift, diffusion, n)?;
        Ok(match self.lipschitz {
            Some(l) => c.with_lipschitz(l),
            None => c,
        })
    }

    /// True when neither coefficient reads the law.
    pub fn is_measure_free(&self) -> bool {
        let drift = match &self.drift {
            DriftSpec::Zero => true,
            DriftSpec::Linear { gamma, .. } => gamma.iter().all(|&g| g == 0.0),
            DriftSpec::ClippedPolynomial { mean_weight, .. } => *mean_weight == 0.0,
        };
        drift && self.modulation.is_none()
    }

    pub fn sigma_is_constant(&self) -> bool {
        self.modulation.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSpec {
    Quadratic { scale: f64, offset: f64 },
    Power { exponent: f64, scale: f64, offset: f64 },
}

impl CostSpec {
    pub fn build(&self, dim: usize) -> Result<CostFunction> {
        let (g, offset) = match *self {
            CostSpec::Quadratic { scale, offset } => (CostFunction::quadratic(dim, scale)?, offset),
            CostSpec::Power {
                exponent,
                scale,
                offset,
            } => (CostFunction::power(dim, exponent, scale)?, offset),
        };
        if offset != 0.0 {
            g.with_offset(OffsetKind::Constant(offset))
        } else {
            Ok(g)
        }
    }

    pub fn is_standard_quadratic(&self) -> bool {
        matches!(*self, CostSpec::Quadratic { scale, offset } if scale == 1.0 && offset == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    OpenLoop,
    Affine,
}

impl TemplateKind {
    pub fn build(self, noise_dim: usize, state_dim: usize, cells: usize) -> Result<ControlField> {
        match self {
            TemplateKind::OpenLoop => ControlField::zero_open_loop(noise_dim, cells),
            TemplateKind::Affine => ControlField::zero_affine(noise_dim, state_dim, cells),
        }
    }
}

/// Everything under `[run]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub experiment: Option<ExperimentKind>,
    pub seed: u64,
    pub steps: usize,
    pub particles: usize,
    /// Use `N(n) = max(particles, 10^4 n)` along a ladder.
    pub scale_particles: bool,
    /// Noise index for single-`n` experiments.
    pub noise_index: u32,
    pub ladder: Option<Vec<u32>>,
    pub cells: usize,
    pub template: Option<TemplateKind>,
    pub dual: DualBudget,
    pub truncation: f64,
    pub truncation_points: usize,
    pub lsmc_particles: usize,
    pub lsmc_degree: usize,
    pub action_cells: usize,
    pub action_restarts: usize,
    pub action_evaluations: usize,
    pub characteristics: usize,
    /// Time steps of the characteristic transport.
    pub flow_steps: usize,
    pub flow_cells: usize,
    pub flow_restarts: usize,
    pub flow_evaluations: usize,
    pub chaos_sizes: Vec<usize>,
    pub chaos_reference: usize,
    /// Independent systems averaged per particle count.
    pub chaos_replicates: usize,
    pub pl_lambdas: Vec<f64>,
    pub pl_triples: usize,
    pub pl_rho_triples: usize,
    pub pl_time: f64,
    /// Overrides of the experiment's declared tolerances.
    pub tolerances: BTreeMap<String, f64>,
}

impl RunSpec {
    /// Particle count for noise index `n`.
    pub fn particles_for(&self, n: u32) -> usize {
        if self.scale_particles {
            self.particles.max(PARTICLES_PER_N * n as usize)
        } else {
            self.particles
        }
    }

    pub fn basis(&self) -> RegressionBasisSpec {
        RegressionBasisSpec {
            family: BasisFamily::Polynomial {
                degree: self.lsmc_degree,
            },
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dynamics: DynamicsSpec,
    pub cost: CostSpec,
    pub terminal: TerminalFunctional,
    pub run: RunSpec,
}

impl ExperimentConfig {
    /// Hex SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Tolerance `name` for `kind`: the config override or the default.
    pub fn tolerance(&self, kind: ExperimentKind, name: &str) -> f64 {
        self.run.tolerances.get(name).copied().unwrap_or_else(|| {
            kind.default_tolerances()
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .unwrap_or_else(|| panic!("experiment {kind} declares no tolerance `{name}`"))
        })
    }

    pub fn ladder(&self, kind: ExperimentKind) -> Vec<u32> {
        self.run.ladder.clone().unwrap_or_else(|| kind.default_ladder())
    }

    pub fn template(&self, kind: ExperimentKind) -> TemplateKind {
        self.run.template.unwrap_or(match kind {
            ExperimentKind::Vanish => TemplateKind::Affine,
            _ => TemplateKind::OpenLoop,
        })
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

type Table = BTreeMap<Spanned<String>, Spanned<Value>>;

struct Reader<'a> {
    text: &'a str,
    sections: BTreeMap<String, (usize, Table)>,
    used: BTreeSet<(String, String)>,
    diags: Vec<Diagnostic>,
}

fn describe(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a number",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a date",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

fn numbers(v: &Value) -> Option<Vec<f64>> {
    match v {
        Value::Array(a) => a.iter().map(number).collect(),
        other => number(other).map(|x| vec![x]),
    }
}

/// Array of arrays, or a flat array read as one-dimensional points.
fn rows(v: &Value) -> Option<Vec<Vec<f64>>> {
    match v {
        Value::Array(a) if a.iter().all(|r| matches!(r, Value::Array(_))) && !a.is_empty() => {
            a.iter().map(numbers).collect()
        }
        Value::Array(a) => a.iter().map(|x| number(x).map(|n| vec![n])).collect(),
        other => number(other).map(|n| vec![vec![n]]),
    }
}

impl<'a> Reader<'a> {
    fn line_of(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn error(&mut self, line: Option<usize>, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            line,
            message: message.into(),
        });
    }

    fn get(&mut self, section: &str, key: &str) -> Option<(usize, Value)> {
        let (_, table) = self.sections.get(section)?;
        let (_, v) = table.iter().find(|(k, _)| k.get_ref() == key)?;
        let line = self.line_of(v.span().start);
        let value = v.get_ref().clone();
        self.used.insert((section.to_string(), key.to_string()));
        Some((line, value))
    }

    fn read<T>(&mut self, section: &str, key: &str, what: &str, conv: impl Fn(&Value) -> Option<T>) -> Option<T> {
        let (line, v) = self.get(section, key)?;
        match conv(&v) {
            Some(x) => Some(x),
            None => {
                self.error(
                    Some(line),
                    format!("[{section}] {key}: expected {what}, found {}", describe(&v)),
                );
                None
            }
        }
    }

    fn f64_opt(&mut self, section: &str, key: &str) -> Option<f64> {
        self.read(section, key, "a number", number)
    }

    fn f64_or(&mut self, section: &str, key: &str, default: f64) -> f64 {
        self.f64_opt(section, key).unwrap_or(default)
    }

    fn f64_req(&mut self, section: &str, key: &str) -> f64 {
        if !self.has(section, key) {
            self.error(None, format!("[{section}] {key} is required"));
            return f64::NAN;
        }
        self.f64_or(section, key, f64::NAN)
    }

    fn count_or(&mut self, section: &str, key: &str, default: usize) -> usize {
        self.read(section, key, "a non-negative integer", |v| match v {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            _ => None,
        })
        .unwrap_or(default)
    }

    fn list_or(&mut self, section: &str, key: &str, default: Vec<f64>) -> Vec<f64> {
        self.read(section, key, "a number or an array of numbers", numbers)
            .unwrap_or(default)
    }

    fn counts_opt(&mut self, section: &str, key: &str) -> Option<Vec<usize>> {
        self.read(section, key, "an array of non-negative integers", |v| match v {
            Value::Array(a) => a
                .iter()
                .map(|x| match x {
                    Value::Integer(i) if *i >= 0 => Some(*i as usize),
                    _ => None,
                })
                .collect(),
            _ => None,
        })
    }

    fn str_opt(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        let (line, v) = self.get(section, key)?;
        match v {
            Value::String(s) => Some((line, s)),
            other => {
                self.error(
                    Some(line),
                    format!("[{section}] {key}: expected a string, found {}", describe(&other)),
                );
                None
            }
        }
    }

    fn bool_or(&mut self, section: &str, key: &str, default: bool) -> bool {
        self.read(section, key, "true or false", |v| v.as_bool()).unwrap_or(default)
    }

    fn has(&self, section: &str, key: &str) -> bool {
        self.sections
            .get(section)
            .is_some_and(|(_, t)| t.keys().any(|k| k.get_ref() == key))
    }

    fn check(&mut self, ok: bool, section: &str, key: &str, message: &str) {
        if !ok {
            let line = self.sections.get(section).and_then(|(_, t)| {
                t.iter()
                    .find(|(k, _)| k.get_ref() == key)
                    .map(|(k, _)| k.span().start)
            });
            let line = line.map(|o| self.line_of(o));
            self.error(line, format!("[{section}] {key}: {message}"));
        }
    }

    fn unknown_keys(&mut self) {
        let mut found = Vec::new();
        for (name, (_, table)) in &self.sections {
            for k in table.keys() {
                if !self.used.contains(&(name.clone(), k.get_ref().clone())) {
                    found.push((self.line_of(k.span().start), format!("[{name}] unknown key `{}`", k.get_ref())));
                }
            }
        }
        for (line, msg) in found {
            self.error(Some(line), msg);
        }
    }
}

fn dynamics(r: &mut Reader) -> Option<DynamicsSpec> {
    const S: &str = "dynamics";
    let dim = r.count_or(S, "dim", 1);
    r.check(dim >= 1, S, "dim", "must be at least 1");
    let dim = dim.max(1);
    let drift = match r.str_opt(S, "drift").map(|(l, s)| (l, s)) {
        None => DriftSpec::Zero,
        Some((_, s)) if s == "zero" => DriftSpec::Zero,
        Some((_, s)) if s == "linear" => {
            let alpha = r.list_or(S, "alpha", vec![0.0]);
            let beta = r.list_or(S, "beta", vec![0.0]);
            let gamma = r.list_or(S, "gamma", vec![0.0]);
            for (k, v) in [("alpha", &alpha), ("beta", &beta), ("gamma", &gamma)] {
                r.check(!v.is_empty() && v.iter().all(|x| x.is_finite()), S, k, "needs finite values");
            }
            DriftSpec::Linear { alpha, beta, gamma }
        }
        Some((_, s)) if s == "clipped_polynomial" => {
            let coeffs = r.list_or(S, "coeffs", vec![]);
            r.check(!coeffs.is_empty(), S, "coeffs", "needs at least one coefficient");
            let clip = r.f64_req(S, "clip");
            r.check(clip >= 0.0, S, "clip", "must be non-negative");
            DriftSpec::ClippedPolynomial {
                coeffs,
                mean_weight: r.f64_or(S, "mean_weight", 0.0),
                clip,
            }
        }
        Some((line, s)) => {
            r.error(
                Some(line),
                format!("[dynamics] drift: unknown drift `{s}` (expected zero, linear or clipped_polynomial)"),
            );
            DriftSpec::Zero
        }
    };
    let sigma = match r.read(S, "sigma", "a number or a matrix", rows) {
        None => identity(dim, 1.0),
        Some(m) if m.len() == 1 && m[0].len() == 1 => identity(dim, m[0][0]),
        Some(m) => m,
    };
    let cols = sigma.first().map_or(0, |r| r.len());
    r.check(
        sigma.len() == dim && cols > 0 && sigma.iter().all(|row| row.len() == cols),
        S,
        "sigma",
        &format!("must be a scalar or a {dim} x d matrix"),
    );
    let modulation = match r.f64_opt(S, "modulation_amplitude") {
        None => None,
        Some(a) => {
            r.check((0.0..1.0).contains(&a), S, "modulation_amplitude", "must lie in [0, 1)");
            Some((a, r.f64_or(S, "modulation_frequency", 1.0)))
        }
    };
    let init = match r.str_opt(S, "init").map(|(l, s)| (l, s)) {
        None => InitialCondition::Point(r.list_or(S, "x0", vec![0.0; dim])),
        Some((_, s)) if s == "point" => InitialCondition::Point(r.list_or(S, "x0", vec![0.0; dim])),
        Some((_, s)) if s == "discrete" => {
            let pts = r.read(S, "points", "an array of points", rows).unwrap_or_default();
            r.check(!pts.is_empty(), S, "init", "discrete initial law needs `points`");
            InitialCondition::Discrete(pts)
        }
        Some((_, s)) if s == "normal" => InitialCondition::Normal {
            mean: r.list_or(S, "mean", vec![0.0; dim]),
            sd: r.list_or(S, "sd", vec![1.0; dim]),
        },
        Some((_, s)) if s == "uniform" => InitialCondition::Uniform {
            lo: r.list_or(S, "lo", vec![0.0; dim]),
            hi: r.list_or(S, "hi", vec![1.0; dim]),
        },
        Some((line, s)) => {
            r.error(
                Some(line),
                format!("[dynamics] init: unknown initial law `{s}` (expected point, discrete, normal or uniform)"),
            );
            InitialCondition::Point(vec![0.0; dim])
        }
    };
    r.check(init.dim() == dim, S, "init", &format!("initial law must live in dimension {dim}"));
    let lipschitz = r.f64_opt(S, "lipschitz");
    Some(DynamicsSpec {
        dim,
        drift,
        sigma,
        modulation,
        init,
        lipschitz,
    })
}

fn identity(dim: usize, s: f64) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { s } else { 0.0 }).collect())
        .collect()
}

fn cost(r: &mut Reader) -> CostSpec {
    const S: &str = "cost";
    let offset = r.f64_or(S, "offset", 0.0);
    match r.str_opt(S, "kind") {
        None => CostSpec::Quadratic { scale: 1.0, offset },
        Some((_, s)) if s == "quadratic" => {
            let scale = r.f64_or(S, "scale", 1.0);
            r.check(scale > 0.0, S, "scale", "must be positive");
            CostSpec::Quadratic { scale, offset }
        }
        Some((_, s)) if s == "power" => {
            let exponent = r.f64_req(S, "exponent");
            r.check(exponent > 1.0, S, "exponent", "must exceed 1");
            let scale = r.f64_or(S, "scale", 1.0);
            r.check(scale > 0.0, S, "scale", "must be positive");
            CostSpec::Power {
                exponent,
                scale,
                offset,
            }
        }
        Some((line, s)) => {
            r.error(
                Some(line),
                format!("[cost] kind: unknown cost `{s}` (expected quadratic or power)"),
            );
            CostSpec::Quadratic { scale: 1.0, offset }
        }
    }
}

fn terminal(r: &mut Reader, dim: usize) -> TerminalFunctional {
    const S: &str = "terminal";
    let coord = r.count_or(S, "coord", 0);
    r.check(coord < dim, S, "coord", "exceeds the state dimension");
    let term = match r.str_opt(S, "kind") {
        None => {
            r.error(None, "[terminal] kind is required");
            Term::Constant(0.0)
        }
        Some((_, s)) if s == "constant" => Term::Constant(r.f64_req(S, "value")),
        Some((_, s)) if s == "linear" => Term::Polynomial {
            coord,
            coeffs: vec![0.0, r.f64_or(S, "weight", 1.0)],
            clip: r.f64_opt(S, "clip"),
        },
        Some((_, s)) if s == "polynomial" => Term::Polynomial {
            coord,
            coeffs: r.list_or(S, "coeffs", vec![0.0]),
            clip: r.f64_opt(S, "clip"),
        },
        Some((_, s)) if s == "neg_squared_distance" => {
            let center = r.list_or(S, "center", vec![0.0; dim]);
            r.check(center.len() == dim, S, "center", &format!("must have {dim} entries"));
            Term::NegSquaredDistance {
                weight: r.f64_or(S, "weight", 1.0),
                center,
            }
        }
        Some((_, s)) if s == "mean_linear" => Term::MeanLinear {
            coord,
            weight: r.f64_or(S, "weight", 1.0),
        },
        Some((_, s)) if s == "tanh" => Term::Tanh {
            coord,
            weight: r.f64_or(S, "weight", 1.0),
            scale: r.f64_or(S, "scale", 1.0),
            shift: r.f64_or(S, "shift", 0.0),
        },
        Some((line, s)) => {
            r.error(Some(line), format!("[terminal] kind: unknown functional `{s}`"));
            Term::Constant(0.0)
        }
    };
    let mut f = TerminalFunctional::new(vec![term]);
    if let Some(c) = r.f64_opt(S, "constant") {
        f = f.shifted(c);
    }
    if let Some(b) = r.f64_opt(S, "bound") {
        f = f.with_bound(b);
    }
    f
}

fn run(r: &mut Reader) -> RunSpec {
    const S: &str = "run";
    let experiment = match r.str_opt(S, "experiment") {
        None => None,
        Some((line, s)) => match s.parse() {
            Ok(k) => Some(k),
            Err(e) => {
                r.error(Some(line), format!("[run] experiment: {e}"));
                None
            }
        },
    };
    let seed = match r.get(S, "seed") {
        None => {
            r.error(None, "[run] seed is required (runs must be reproducible)");
            0
        }
        Some((_, Value::Integer(i))) if i >= 0 => i as u64,
        Some((line, v)) => {
            r.error(
                Some(line),
                format!("[run] seed: expected a non-negative integer, found {}", describe(&v)),
            );
            0
        }
    };
    let steps = r.count_or(S, "steps", DEFAULT_STEPS);
    r.check(steps >= 1, S, "steps", "must be positive");
    let particles = r.count_or(S, "particles", DEFAULT_PARTICLES);
    r.check(particles >= 2, S, "particles", "must be at least 2");
    let noise_index = r.count_or(S, "noise_index", 1);
    r.check(noise_index >= 1, S, "noise_index", "must be at least 1");
    let ladder = r.counts_opt(S, "ladder").map(|v| v.into_iter().map(|n| n as u32).collect::<Vec<u32>>());
    if let Some(l) = &ladder {
        r.check(
            !l.is_empty() && l[0] >= 1 && l.windows(2).all(|w| w[0] < w[1]),
            S,
            "ladder",
            "must be a non-empty, strictly increasing list of positive integers",
        );
    }
    let cells = r.count_or(S, "cells", 20.min(steps.max(1)));
    r.check(cells >= 1 && cells <= steps.max(1), S, "cells", "must lie between 1 and steps");
    let template = match r.str_opt(S, "template") {
        None => None,
        Some((_, s)) if s == "open_loop" => Some(TemplateKind::OpenLoop),
        Some((_, s)) if s == "affine" => Some(TemplateKind::Affine),
        Some((line, s)) => {
            r.error(
                Some(line),
                format!("[run] template: unknown template `{s}` (expected open_loop or affine)"),
            );
            None
        }
    };
    let base = DualBudget::default();
    let dual = DualBudget {
        train_particles: r.count_or(S, "dual_train_particles", base.train_particles),
        train_steps: r.read(S, "dual_train_steps", "a positive integer", |v| match v {
            Value::Integer(i) if *i > 0 => Some(*i as usize),
            _ => None,
        }),
        validation_particles: particles,
        starts: r.count_or(S, "dual_starts", base.starts),
        start_spread: r.f64_or(S, "dual_start_spread", base.start_spread),
        max_iterations: r.count_or(S, "dual_max_iterations", base.max_iterations),
        max_evaluations: r.count_or(S, "dual_max_evaluations", base.max_evaluations),
    };
    r.check(dual.starts >= 1, S, "dual_starts", "must be positive");
    let truncation = r.f64_or(S, "truncation", 8.0);
    r.check(truncation > 0.0, S, "truncation", "must be positive");
    let lsmc_particles = r.count_or(S, "lsmc_particles", 20_000);
    let lsmc_degree = r.count_or(S, "lsmc_degree", 3);
    r.check(lsmc_degree >= 1, S, "lsmc_degree", "must be positive");
    let action_cells = r.count_or(S, "action_cells", 10.min(steps.max(1)));
    r.check(action_cells >= 1 && action_cells <= steps, S, "action_cells", "must lie between 1 and steps");
    let flow_steps = r.count_or(S, "flow_steps", 100);
    let flow_cells = r.count_or(S, "flow_cells", 10);
    r.check(flow_cells >= 1 && flow_cells <= flow_steps, S, "flow_cells", "must lie between 1 and flow_steps");
    let characteristics = r.count_or(S, "characteristics", 200);
    r.check(characteristics >= 100, S, "characteristics", "must be at least 100");
    let chaos_sizes = r.counts_opt(S, "chaos_sizes").unwrap_or_else(|| vec![100, 1_000, 10_000]);
    r.check(
        !chaos_sizes.is_empty() && chaos_sizes[0] >= 1 && chaos_sizes.windows(2).all(|w| w[0] < w[1]),
        S,
        "chaos_sizes",
        "must be strictly increasing",
    );
    let chaos_reference = r.count_or(S, "chaos_reference", 100_000);
    r.check(
        chaos_sizes.last().is_none_or(|&n| chaos_reference > n),
        S,
        "chaos_reference",
        "must exceed every size in chaos_sizes",
    );
    let pl_lambdas = r.list_or(S, "pl_lambdas", vec![0.25, 0.5, 0.75]);
    r.check(
        !pl_lambdas.is_empty() && pl_lambdas.iter().all(|l| *l > 0.0 && *l < 1.0),
        S,
        "pl_lambdas",
        "every lambda must lie in (0, 1)",
    );
    let pl_time = r.f64_or(S, "pl_time", 1.0);
    r.check(pl_time > 0.0 && pl_time <= 1.0, S, "pl_time", "must lie in (0, 1]");
    let known: BTreeSet<&str> = ExperimentKind::ALL
        .iter()
        .flat_map(|k| k.default_tolerances().iter().map(|(n, _)| *n))
        .collect();
    let mut tolerances = BTreeMap::new();
    let keys: Vec<String> = r
        .sections
        .get(S)
        .map(|(_, t)| t.keys().map(|k| k.get_ref().clone()).collect())
        .unwrap_or_default();
    for key in keys {
        if let Some(name) = key.strip_prefix("tol_") {
            if known.contains(name) {
                if let Some(v) = r.f64_opt(S, &key) {
                    tolerances.insert(name.to_string(), v);
                }
            }
        }
    }
    RunSpec {
        experiment,
        seed,
        steps,
        particles,
        scale_particles: r.bool_or(S, "scale_particles", true),
        noise_index: noise_index.max(1) as u32,
        ladder,
        cells,
        template,
        dual,
        truncation,
        truncation_points: r.count_or(S, "truncation_points", 801),
        lsmc_particles,
        lsmc_degree,
        action_cells,
        action_restarts: r.count_or(S, "action_restarts", 5).max(1),
        action_evaluations: r.count_or(S, "action_evaluations", 20_000).max(1),
        characteristics,
        flow_steps,
        flow_cells,
        flow_restarts: r.count_or(S, "flow_restarts", 3).max(1),
        flow_evaluations: r.count_or(S, "flow_evaluations", 4_000).max(1),
        chaos_sizes,
        chaos_reference,
        chaos_replicates: r.count_or(S, "chaos_replicates", 8).max(1),
        pl_lambdas,
        pl_triples: r.count_or(S, "pl_triples", 100),
        pl_rho_triples: r.count_or(S, "pl_rho_triples", 20),
        pl_time,
        tolerances,
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: BTreeMap<Spanned<String>, Spanned<Value>> = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        Error::Config(vec![Diagnostic {
            line,
            message: e.message().to_string(),
        }])
    })?;
    let mut r = Reader {
        text,
        sections: BTreeMap::new(),
        used: BTreeSet::new(),
        diags: Vec::new(),
    };
    let mut spanned: BTreeMap<String, Table> = toml::from_str(text).unwrap_or_default();
    for (name, value) in raw {
        let line = r.line_of(name.span().start);
        match (name.get_ref().as_str(), value.get_ref()) {
            (s @ ("dynamics" | "cost" | "terminal" | "run"), Value::Table(_)) => {
                let table = spanned.remove(s).unwrap_or_default();
                r.sections.insert(s.to_string(), (line, table));
            }
            (s, _) => r.error(
                Some(line),
                format!("unknown section or top-level key `{s}` (expected [dynamics], [cost], [terminal], [run])"),
            ),
        }
    }
    for s in ["terminal", "run"] {
        if !r.sections.contains_key(s) {
            r.error(None, format!("missing section [{s}]"));
        }
    }
    let dynamics = dynamics(&mut r);
    let cost = cost(&mut r);
    let dim = dynamics.as_ref().map_or(1, |d| d.dim);
    let terminal = terminal(&mut r, dim);
    let run = run(&mut r);
    r.unknown_keys();
    for (section, (_, table)) in &r.sections {
        for (k, v) in table {
            if matches!(v.get_ref(), Value::Table(_)) {
                let line = text[..k.span().start].matches('\n').count() + 1;
                r.diags.push(Diagnostic {
                    line: Some(line),
                    message: format!("[{section}] {}: nested tables are not allowed", k.get_ref()),
                });
            }
        }
    }
    if !r.diags.is_empty() {
        let mut d = r.diags;
        d.sort_by_key(|x| x.line.unwrap_or(usize::MAX));
        d.dedup();
        return Err(Error::Config(d));
    }
    Ok(ExperimentConfig {
        dynamics: dynamics.expect("dynamics parsed"),
        cost,
        terminal,
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[terminal]\nkind = \"linear\"\n\n[run]\nseed = 7\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.run.steps, 512);
        assert_eq!(c.run.particles, 200_000);
        assert_eq!(c.run.seed, 7);
        assert_eq!(c.dynamics.init, InitialCondition::Point(vec![0.0]));
        assert!(c.cost.is_standard_quadratic());
        assert_eq!(c.tolerance(ExperimentKind::Gibbs, "dual_gap"), 2e-2);
        assert_eq!(c.ladder(ExperimentKind::Fw), vec![1, 2, 4, 8, 16, 32]);
    }

    #[test]
    fn seed_is_required() {
        let err = parse_config("[terminal]\nkind = \"linear\"\n[run]\nsteps = 10\n").unwrap_err();
        let Error::Config(d) = err else { panic!() };
        assert!(d.iter().any(|x| x.message.contains("seed is required")));
    }

    #[test]
    fn ladder_must_increase() {
        let err = parse_config(&format!("{MINIMAL}ladder = [4, 2]\n")).unwrap_err();
        let Error::Config(d) = err else { panic!() };
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].line, Some(6));
        assert!(d[0].message.contains("strictly increasing"));
    }

    #[test]
    fn diagnostics_carry_lines() {
        let text = "[dynamics]\ndrift = \"linear\"\nbeta = \"x\"\nfoo = 1\n[terminal]\nkind = \"linear\"\n[run]\nseed = 1\nsteps = -3\n";
        let Error::Config(d) = parse_config(text).unwrap_err() else { panic!() };
        let lines: Vec<_> = d.iter().map(|x| x.line).collect();
        assert_eq!(lines, vec![Some(3), Some(4), Some(9)], "{d:?}");
        assert!(d[1].message.contains("unknown key `foo`"));
    }

    #[test]
    fn syntax_errors_are_located() {
        let Error::Config(d) = parse_config("[run]\nseed = = 1\n").unwrap_err() else { panic!() };
        assert_eq!(d[0].line, Some(2));
    }

    #[test]
    fn full_dynamics_and_hash() {
        let text = "[dynamics]\ndrift = \"linear\"\nbeta = -1\nsigma = 1.0\ninit = \"discrete\"\npoints = [-1.0, 1.0]\n\
                    [cost]\nkind = \"power\"\nexponent = 1.5\n[terminal]\nkind = \"neg_squared_distance\"\ncenter = [1.0]\n\
                    [run]\nseed = 3\ntol_final_gap = 0.1\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.dynamics.init, InitialCondition::Discrete(vec![vec![-1.0], vec![1.0]]));
        assert_eq!(c.tolerance(ExperimentKind::Fw, "final_gap"), 0.1);
        let coeffs = c.dynamics.coefficients(4).unwrap();
        assert_eq!(coeffs.noise_index(), 4);
        assert_eq!(c.hash(), parse_config(text).unwrap().hash());
        let other = parse_config(&text.replace("seed = 3", "seed = 4")).unwrap();
        assert_ne!(c.hash(), other.hash());
        assert_eq!(c.hash().len(), 64);
    }
}
