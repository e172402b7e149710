use mfrisk::experiments::{
    parse_config, run_experiment, ExperimentKind, ExperimentReport, DEFAULT_PARTICLES, DEFAULT_STEPS,
};
use mfrisk::Error;
use proptest::prelude::*;

const PL: &str = r#"
[dynamics]
drift = "linear"
beta = -1.0
x0 = [0.5]

[terminal]
kind = "constant"
value = 0.0

[run]
seed = 1
steps = 32
particles = 4000
pl_triples = 10
pl_rho_triples = 3
"#;

fn diagnostics(text: &str) -> Vec<(Option<usize>, String)> {
    match parse_config(text) {
        Err(Error::Config(d)) => d.into_iter().map(|d| (d.line, d.message)).collect(),
        other => panic!("expected diagnostics, got {other:?}"),
    }
}

#[test]
fn minimal_config_gets_documented_defaults() {
    let cfg = parse_config("[terminal]\nkind = \"linear\"\n[run]\nseed = 3\n").unwrap();
    assert_eq!(cfg.run.steps, DEFAULT_STEPS);
    assert_eq!(cfg.run.particles, DEFAULT_PARTICLES);
    assert_eq!(cfg.run.steps, 512);
    assert_eq!(cfg.run.particles, 200_000);
}

#[test]
fn missing_seed_is_rejected() {
    let d = diagnostics("[terminal]\nkind = \"linear\"\n[run]\nsteps = 10\n");
    assert!(d.iter().any(|(_, m)| m.contains("seed")), "{d:?}");
}

#[test]
fn decreasing_ladder_is_rejected() {
    let d = diagnostics("[terminal]\nkind = \"linear\"\n[run]\nseed = 1\nladder = [4, 2]\n");
    assert!(d.iter().any(|(l, m)| *l == Some(5) && m.contains("ladder")), "{d:?}");
}

#[test]
fn every_problem_is_itemized_with_its_line() {
    let text = "[dynamics]\nsigmaa = 1.0\n[terminal]\nkind = \"linear\"\n[run]\nseed = 1\nsteps = -3\n";
    let d = diagnostics(text);
    assert!(d.iter().any(|(l, m)| *l == Some(2) && m.contains("sigmaa")), "{d:?}");
    assert!(d.iter().any(|(l, m)| *l == Some(7) && m.contains("steps")), "{d:?}");
}

#[test]
fn verdicts_survive_a_json_round_trip() {
    let report = run_experiment(ExperimentKind::Pl, &parse_config(PL).unwrap()).unwrap().report;
    let back = ExperimentReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
    let stored: Vec<bool> = report.checks.iter().map(|c| c.passed).collect();
    assert_eq!(back.recompute_verdicts(), stored);
}

#[test]
fn csv_header_carries_the_verdicts() {
    let report = run_experiment(ExperimentKind::Pl, &parse_config(PL).unwrap()).unwrap().report;
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# check ")));
    assert!(text.lines().any(|l| l == "label,method,n,particles,value,ci,reference,gap"));
}

#[test]
fn constant_payoff_gives_exact_rows() {
    let text = r#"
[dynamics]
x0 = [0.0]
[terminal]
kind = "constant"
value = 0.25
[run]
seed = 4
steps = 16
particles = 2000
ladder = [1, 2, 4]
action_evaluations = 500
"#;
    let report = run_experiment(ExperimentKind::Fw, &parse_config(text).unwrap()).unwrap().report;
    for label in ["n=1", "n=2", "n=4"] {
        let row = report.rows.iter().find(|r| r.label == label).unwrap();
        assert_eq!(row.value, 0.25);
        assert_eq!(row.gap, Some(0.0));
    }
}

#[test]
fn deterministic_chaos_passes_trivially() {
    let text = r#"
[dynamics]
drift = "linear"
gamma = 0.5
sigma = 0.0
x0 = [1.0]
[terminal]
kind = "constant"
value = 0.0
[run]
seed = 5
steps = 10
chaos_sizes = [10, 100]
chaos_reference = 1000
chaos_replicates = 2
"#;
    let report = run_experiment(ExperimentKind::Chaos, &parse_config(text).unwrap()).unwrap().report;
    assert!(report.rows.iter().all(|r| r.value == 0.0));
    assert!(report.passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn identical_configs_give_identical_payloads(seed in 0u64..1_000_000) {
        let text = PL.replace("seed = 1", &format!("seed = {seed}"));
        let cfg = parse_config(&text).unwrap();
        let a = run_experiment(ExperimentKind::Pl, &cfg).unwrap();
        let b = run_experiment(ExperimentKind::Pl, &cfg).unwrap();
        prop_assert_eq!(a.report.to_json().unwrap(), b.report.to_json().unwrap());
        prop_assert_eq!(a.artifacts, b.artifacts);
    }
}
