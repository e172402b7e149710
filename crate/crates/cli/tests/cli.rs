use std::fs;
use std::process::Command;

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

fn mfrisk() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfrisk"))
}

#[test]
fn pl_writes_a_json_report_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pl.toml");
    fs::write(&cfg, PL).unwrap();
    let out = dir.path().join("out");
    let status = mfrisk()
        .args(["pl", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("pl.json")).unwrap()).unwrap();
    assert_eq!(report["experiment"], "pl");
    assert_eq!(report["provenance"]["seed"], 1);
    assert!(out.join("pl_triples.csv").exists());
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pl.toml");
    fs::write(&cfg, PL).unwrap();
    let status = mfrisk()
        .args(["pl", "--seed", "77", "--format", "csv", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(dir.path().join("pl.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "# seed: 77"));
}

#[test]
fn failing_tolerance_gives_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pl.toml");
    // demands a relative slack of at least one
    fs::write(&cfg, format!("{PL}tol_slack = -1.0\n")).unwrap();
    let status = mfrisk().args(["pl", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn bad_config_reports_lines_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[run]\nsed = 1\n").unwrap();
    let out = mfrisk().args(["gibbs", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn mismatched_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pl.toml");
    fs::write(&cfg, PL.replace("seed = 1", "seed = 1\nexperiment = \"pl\"")).unwrap();
    let out = mfrisk().args(["chaos", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
