//! End-to-end runs of the `weakkam` binary and library entry point.

use std::path::{Path, PathBuf};
use std::process::Command;

use clap::Parser;
use weakkam_cli::{run, Cli, CliError};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_weakkam"))
}

fn small_quadratic(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        format!(
            r#"
[model]
family = "quadratic"
potential = "half_square"
[grid]
lo = [-2.0]
hi = [2.0]
h = 0.05
[velocities]
q_max = 1.0
count = 5
[schedule]
lambdas = [1.0, 0.5]
[probes]
points = [[0.0], [0.5]]
{extra}
"#
        ),
    )
    .unwrap();
    path
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn claim(report: &serde_json::Value, name: &str) -> f64 {
    report["claims"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("claim {name} missing"))["value"]
        .as_f64()
        .unwrap()
}

#[test]
fn missing_grid_h_exits_2_with_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    let text = std::fs::read_to_string(configs().join("quadratic.toml")).unwrap().replace("h = 0.02\n", "");
    std::fs::write(&cfg, text).unwrap();
    let out = bin().arg("critical").arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("grid.h: required"), "{stderr}");

    let cli = Cli::parse_from(["weakkam", "critical", cfg.to_str().unwrap()]);
    match run(&cli) {
        Err(e @ CliError::Config(_)) => assert_eq!(e.exit_code(), 2),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn critical_on_quadratic_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("crit");
    let status = bin().args(["critical", "--config"]).arg(configs().join("quadratic.toml")).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let r = report(&out);
    let c = claim(&r, "critical_value");
    assert!((-1e-3..=1e-3).contains(&c), "c = {c}");
    assert!(out.join("bisection.csv").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn every_subcommand_runs_on_a_small_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_quadratic(tmp.path(), "");
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["validate"], "report.json"),
        (vec!["critical"], "bisection.csv"),
        (vec!["distance", "--source", "-0.5"], "distance.csv"),
        (vec!["aubry"], "aubry.csv"),
        (vec!["solve", "--lambda", "0.5"], "u.csv"),
        (vec!["mather"], "mather_set.csv"),
        (vec!["mather", "--lambda", "0.5", "--z", "0.5"], "measure.csv"),
        (vec!["limit"], "w.csv"),
        (vec!["study"], "gaps.svg"),
    ];
    for (k, (args, artifact)) in cases.iter().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let status = bin().args(args).arg(&cfg).arg("--out").arg(&out).arg("--threads").arg("2").status().unwrap();
        assert_eq!(status.code(), Some(0), "{args:?}");
        assert!(out.join(artifact).exists(), "{args:?} did not write {artifact}");
        let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["command"], args[0]);
        for entry in manifest["outputs"].as_array().unwrap() {
            let bytes = std::fs::read(out.join(entry["file"].as_str().unwrap())).unwrap();
            assert_eq!(entry["sha256"].as_str().unwrap(), weakkam_cli::output::sha256_hex(&bytes));
        }
    }
    let r = report(&tmp.path().join("run6"));
    assert!(claim(&r, "duality_gap") < 1e-8);
}

#[test]
fn overrides_and_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_quadratic(tmp.path(), "[outputs]\nformats = [\"csv\"]\n");
    let out = tmp.path().join("o");
    let status = bin()
        .args(["solve", "--lambda", "1.0"])
        .arg(&cfg)
        .args(["--set", "grid.h=0.1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(!out.join("report.json").exists());
    let u = std::fs::read_to_string(out.join("u.csv")).unwrap();
    assert_eq!(u.lines().count(), 1 + 41);
    let status = bin().args(["solve", "--lambda", "1.0"]).arg(&cfg).args(["--set", "grid.nope=1"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn solver_failures_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_quadratic(tmp.path(), "[solver]\nmax_iter = 1\ntol = 1e-14\n");
    let out = bin().args(["solve", "--lambda", "0.5"]).arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("E-DISCOUNTED"));
}

#[test]
fn failed_assumptions_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("lorentz.toml");
    std::fs::write(
        &path,
        "[model]\nfamily = \"quadratic\"\npotential = \"lorentzian\"\n[grid]\nradius = 2.0\nh = 0.1\n[velocities]\nq_max = 1.0\ncount = 5\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    let status = bin().arg("validate").arg(&path).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(2));
    assert_eq!(report(&out)["details"]["all_passed"], false);
}

#[test]
fn identical_runs_have_identical_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_quadratic(tmp.path(), "");
    let mut manifests = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("s{k}"));
        let status = bin().arg("study").arg(&cfg).args(["--seed", "3", "--out"]).arg(&out).status().unwrap();
        assert_eq!(status.code(), Some(0));
        manifests.push(std::fs::read(out.join("manifest.json")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
}
