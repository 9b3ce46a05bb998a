use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "\
[grid]
n = 65
[experiment]
duration = 0.5
horizons = 1, 2
n_seeds = 2
n_initials = 2
sample_count = 500
sigma_count = 3
alphas = 0.2, 0.1
";

fn plrds(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plrds"))
        .current_dir(dir)
        .env("PLRDS_WORKERS", "1")
        .args(args)
        .output()
        .unwrap()
}

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.ini"), format!("{SMALL}{extra}")).unwrap();
    dir
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn invalid_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(plrds(dir.path(), &["plot"]).status.code(), Some(2));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = setup("[problem]\np = 3\nq = 2\n");
    let out = plrds(dir.path(), &["--config", "run.ini", "validate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 13: q must be ≥ p"), "{err}");
    let missing = plrds(dir.path(), &["--config", "nope.ini", "validate"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn cocycle_test_reports_zero_residuals() {
    let dir = setup("");
    let out = plrds(dir.path(), &["--config", "run.ini", "--out", "o", "cocycle-test"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("o/cocycle-test/cocycle.csv"));
    assert_eq!(rows[0], ["identity_residual", "max_composition_residual"]);
    assert_eq!(rows.len(), 2);
    for v in &rows[1] {
        assert_eq!(v.parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn manifest_and_reports_are_written() {
    let dir = setup("[output]\nfield_dump = csv\n");
    let out = plrds(
        dir.path(),
        &["--config", "run.ini", "--out", "o", "--seed", "9", "simulate"],
    );
    assert_eq!(out.status.code(), Some(0));
    let base = dir.path().join("o/simulate");
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(base.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["seeds"][0], 9);
    assert_eq!(manifest["config"]["grid"]["n"], "65");
    assert!(manifest["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    let rows = read_csv(&base.join("trajectory.csv"));
    assert_eq!(rows[0], ["t", "l2_sq", "grad_p_norm", "q_norm", "z_t", "eta_t"]);
    assert_eq!(rows.len(), 1 + 500);
    let end = plrds::formats::read_field_csv(&base.join("final.csv")).unwrap();
    assert_eq!(end.grid().n_per_axis(), 65);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(base.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["tables"]["trajectory"].as_array().unwrap().len(), 500);
}

#[test]
fn reports_are_reproducible() {
    let dir = setup("");
    for out in ["a", "b"] {
        let o = plrds(dir.path(), &["--config", "run.ini", "--out", out, "absorb-check"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    }
    for file in ["absorbing.csv", "report.json"] {
        let a = std::fs::read_to_string(dir.path().join("a/absorb-check").join(file)).unwrap();
        let b = std::fs::read_to_string(dir.path().join("b/absorb-check").join(file)).unwrap();
        assert!(a == b, "{file} differs between runs");
    }
}

#[test]
fn every_experiment_runs_on_a_small_problem() {
    let dir = setup("");
    let cases = [
        ("validate", "validation.csv"),
        ("energy-audit", "energy.csv"),
        ("tail-check", "tail.csv"),
        ("estimate-attractor", "attractor.csv"),
        ("usc-sweep", "usc_medians.csv"),
        ("periodicity-check", "periodicity.csv"),
    ];
    for (cmd, file) in cases {
        let out = plrds(dir.path(), &["--config", "run.ini", "--out", "o", cmd]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
        assert!(dir.path().join("o").join(cmd).join(file).exists(), "{cmd}");
    }
}

#[test]
fn failed_checks_exit_with_one() {
    let dir = setup("[problem]\nperiod = none\n");
    let out = plrds(dir.path(), &["--config", "run.ini", "--out", "o", "periodicity-check"]);
    assert_eq!(out.status.code(), Some(1));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/periodicity-check/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["status"], "failed");
}

#[test]
fn run_uses_the_configured_experiment() {
    let dir = setup("[experiment]\n");
    let out = plrds(dir.path(), &["--config", "run.ini", "run"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.ini"),
        "[experiment]\nname = cocycle-test\nn_seeds = 1\n",
    )
    .unwrap();
    let out = plrds(dir.path(), &["--config", "run.ini", "--out", "o", "run"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("o/cocycle-test/cocycle.csv").exists());
}

#[test]
fn show_config_round_trips() {
    let dir = setup("");
    let out = plrds(dir.path(), &["--config", "run.ini", "show-config"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let again = plrds::parse_config(&text).unwrap();
    assert_eq!(again, plrds::parse_config(SMALL).unwrap());
}
