//! Experiment reports and their verdicts.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::error::Result;

/// One measured quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub method: String,
    pub n: Option<u32>,
    pub particles: Option<usize>,
    pub value: f64,
    /// Half-width of the 95% interval.
    pub ci: Option<f64>,
    pub reference: Option<f64>,
    /// `|value - reference|`
    pub gap: Option<f64>,
}

impl ReportRow {
    pub fn new(label: impl Into<String>, method: impl Into<String>, value: f64) -> Self {
        Self {
            label: label.into(),
            method: method.into(),
            n: None,
            particles: None,
            value,
            ci: None,
            reference: None,
            gap: None,
        }
    }

    pub fn n(mut self, n: u32) -> Self {
        self.n = Some(n);
        self
    }

    pub fn particles(mut self, p: usize) -> Self {
        self.particles = Some(p);
        self
    }

    pub fn ci(mut self, ci: f64) -> Self {
        self.ci = Some(ci);
        self
    }

    pub fn reference(mut self, r: f64) -> Self {
        self.reference = Some(r);
        self.gap = Some((self.value - r).abs());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
}

/// How a check's observed value is derived from the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// The `gap` of a row.
    Gap { row: String },
    /// `|value(a) - value(b)|`
    Difference { a: String, b: String },
    /// `value(upper) - value(lower) - multiple * hypot(ci(upper), ci(lower))`:
    /// positive when a lower bound beats the quantity it bounds.
    Excess { lower: String, upper: String, multiple: f64 },
    /// Number of increases of `gap` along `rows`; `inf` when one of them is
    /// larger than `multiple` combined intervals.
    GapInversions { rows: Vec<String>, multiple: f64 },
    /// Number of consecutive pairs of `rows` whose value does not strictly
    /// decrease; zero when every value is exactly zero.
    NotDecreasing { rows: Vec<String> },
    /// The value of a row.
    Value { row: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(flatten)]
    pub rule: Rule,
    pub observed: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub crate_version: String,
    /// Versions of the components that produced the rows.
    pub modules: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    /// Which limit regime or identity the run instantiates.
    pub regime: String,
    pub tolerances: BTreeMap<String, f64>,
    pub rows: Vec<ReportRow>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

pub const CSV_COLUMNS: &str = "label,method,n,particles,value,ci,reference,gap";

fn row_value(rows: &[ReportRow], label: &str) -> Option<f64> {
    rows.iter().find(|r| r.label == label).map(|r| r.value)
}

fn find<'a>(rows: &'a [ReportRow], label: &str) -> Option<&'a ReportRow> {
    rows.iter().find(|r| r.label == label)
}

impl Rule {
    /// Observed value from the rows; `NaN` when a referenced row is missing.
    pub fn observe(&self, rows: &[ReportRow]) -> f64 {
        match self {
            Rule::Gap { row } => find(rows, row).and_then(|r| r.gap).unwrap_or(f64::NAN),
            Rule::Difference { a, b } => match (row_value(rows, a), row_value(rows, b)) {
                (Some(x), Some(y)) => (x - y).abs(),
                _ => f64::NAN,
            },
            Rule::Excess { lower, upper, multiple } => match (find(rows, lower), find(rows, upper)) {
                (Some(l), Some(u)) => {
                    l.value - u.value - multiple * l.ci.unwrap_or(0.0).hypot(u.ci.unwrap_or(0.0))
                }
                _ => f64::NAN,
            },
            Rule::GapInversions { rows: labels, multiple } => {
                let sel: Option<Vec<&ReportRow>> = labels.iter().map(|l| find(rows, l)).collect();
                let Some(sel) = sel else { return f64::NAN };
                let mut count = 0.0;
                for w in sel.windows(2) {
                    let (a, b) = (w[0].gap.unwrap_or(f64::NAN), w[1].gap.unwrap_or(f64::NAN));
                    if !(a.is_finite() && b.is_finite()) {
                        return f64::NAN;
                    }
                    if b > a {
                        let allowed = multiple * w[0].ci.unwrap_or(0.0).hypot(w[1].ci.unwrap_or(0.0));
                        if b - a > allowed {
                            return f64::INFINITY;
                        }
                        count += 1.0;
                    }
                }
                count
            }
            Rule::NotDecreasing { rows: labels } => {
                let vals: Option<Vec<f64>> = labels.iter().map(|l| row_value(rows, l)).collect();
                let Some(vals) = vals else { return f64::NAN };
                if vals.iter().all(|&v| v == 0.0) {
                    return 0.0;
                }
                vals.windows(2).filter(|w| !(w[1] < w[0])).count() as f64
            }
            Rule::Value { row } => row_value(rows, row).unwrap_or(f64::NAN),
        }
    }
}

impl Check {
    pub fn new(name: impl Into<String>, rule: Rule, comparison: Comparison, threshold: f64, rows: &[ReportRow]) -> Self {
        let observed = rule.observe(rows);
        Self {
            name: name.into(),
            rule,
            observed,
            comparison,
            threshold,
            passed: verdict(observed, comparison, threshold),
        }
    }
}

fn verdict(observed: f64, comparison: Comparison, threshold: f64) -> bool {
    match comparison {
        Comparison::AtMost => observed <= threshold,
        Comparison::AtLeast => observed >= threshold,
    }
}

impl ExperimentReport {
    pub fn new(kind: ExperimentKind, regime: impl Into<String>, cfg: &ExperimentConfig) -> Self {
        let tolerances = kind
            .default_tolerances()
            .iter()
            .map(|(name, _)| (name.to_string(), cfg.tolerance(kind, name)))
            .collect();
        let version = env!("CARGO_PKG_VERSION").to_string();
        let modules = ["convex", "particles", "rho", "limit", "experiments"]
            .iter()
            .map(|m| (m.to_string(), version.clone()))
            .collect();
        Self {
            experiment: kind,
            regime: regime.into(),
            tolerances,
            rows: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            provenance: Provenance {
                config_hash: cfg.hash(),
                seed: cfg.run.seed,
                crate_version: version,
                modules,
            },
        }
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    /// Adds a check evaluated on the rows recorded so far.
    pub fn check(&mut self, name: &str, rule: Rule, comparison: Comparison, threshold: f64) {
        let c = Check::new(name, rule, comparison, threshold, &self.rows);
        self.checks.push(c);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Verdicts recomputed from the rows and thresholds alone.
    pub fn recompute_verdicts(&self) -> Vec<bool> {
        self.checks
            .iter()
            .map(|c| verdict(c.rule.observe(&self.rows), c.comparison, c.threshold))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Rows as CSV, preceded by `#` lines with the metadata and verdicts.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# experiment: {}", self.experiment)?;
        writeln!(out, "# regime: {}", self.regime)?;
        writeln!(out, "# config_hash: {}", self.provenance.config_hash)?;
        writeln!(out, "# seed: {}", self.provenance.seed)?;
        writeln!(out, "# version: {}", self.provenance.crate_version)?;
        for (k, v) in &self.tolerances {
            writeln!(out, "# tolerance {k}: {v}")?;
        }
        for c in &self.checks {
            let cmp = match c.comparison {
                Comparison::AtMost => "<=",
                Comparison::AtLeast => ">=",
            };
            writeln!(
                out,
                "# check {}: {} {cmp} {} -> {}",
                c.name,
                c.observed,
                c.threshold,
                if c.passed { "PASS" } else { "FAIL" }
            )?;
        }
        for n in &self.notes {
            writeln!(out, "# note: {n}")?;
        }
        writeln!(out, "{CSV_COLUMNS}")?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.label,
                r.method,
                r.n.map_or(String::new(), |x| x.to_string()),
                r.particles.map_or(String::new(), |x| x.to_string()),
                r.value,
                opt(r.ci),
                opt(r.reference),
                opt(r.gap)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<ReportRow> {
        vec![
            ReportRow::new("n=1", "mc", -0.9).ci(0.01).reference(-1.0 / 3.0),
            ReportRow::new("n=2", "mc", -0.6).ci(0.01).reference(-1.0 / 3.0),
            ReportRow::new("n=4", "mc", -0.61).ci(0.02).reference(-1.0 / 3.0),
            ReportRow::new("n=8", "mc", -0.4).ci(0.02).reference(-1.0 / 3.0),
        ]
    }

    #[test]
    fn inversions_within_ci_are_counted() {
        let labels: Vec<String> = ["n=1", "n=2", "n=4", "n=8"].iter().map(|s| s.to_string()).collect();
        let r = Rule::GapInversions { rows: labels.clone(), multiple: 1.0 };
        assert_eq!(r.observe(&rows()), 1.0);
        let mut bad = rows();
        bad[2].value = -0.8;
        bad[2].gap = Some((bad[2].value + 1.0 / 3.0f64).abs());
        assert_eq!(r.observe(&bad), f64::INFINITY);
    }

    #[test]
    fn strict_decrease_and_zero_rows() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let r = Rule::NotDecreasing { rows: labels };
        let z = vec![ReportRow::new("a", "w2", 0.0), ReportRow::new("b", "w2", 0.0)];
        assert_eq!(r.observe(&z), 0.0);
        let up = vec![ReportRow::new("a", "w2", 0.1), ReportRow::new("b", "w2", 0.2)];
        assert_eq!(r.observe(&up), 1.0);
    }

    #[test]
    fn excess_uses_combined_interval() {
        let rows = vec![
            ReportRow::new("primal", "mc", 0.5).ci(0.03),
            ReportRow::new("dual", "dual", 0.6).ci(0.04),
        ];
        let r = Rule::Excess {
            lower: "dual".into(),
            upper: "primal".into(),
            multiple: 3.0,
        };
        assert!((r.observe(&rows) - (0.1 - 0.15)).abs() < 1e-12);
    }
}
