use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn telegraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_telegraph")).args(args).output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const BASE: &str = r#"
schema = 1

[kernel]
family = "fractional_rl"
alpha = "11/12"

[model]
beta = "2"
gamma = 1.0
kappa = 3
p = "4/3"
s = 1
q0 = "5/3"

[time]
t_final = 1.0
cells = 512

[torus]
n = 8

[data]
kind = "zero"
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn exponents_for_the_cubic_preset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let res = telegraph(&["reproduce-example", "6.2", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rep = &read_json(&out.join("exponents.json"))["result"]["report"];
    assert_eq!(rep["q"], "5");
    assert_eq!(rep["q0_tau"], "5/6");
    assert_eq!(rep["q_tau1"], "5/8");
}

#[test]
fn kernel_check_passes_for_fractional_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BASE);
    let out = dir.path().join("o");
    let res = telegraph(&["kernel-check", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let v = read_json(&out.join("kernel_check.json"));
    assert_eq!(v["result"]["pass"], true);
    assert!(v["result"]["max_residual"].as_f64().unwrap() <= 1e-6);
    let csv = std::fs::read_to_string(out.join("pc_star_residuals.csv")).unwrap();
    assert!(csv.starts_with("# config_hash: "));
    assert!(csv.contains("# code_version: ") && csv.contains("t,residual"));
}

#[test]
fn zero_data_solve_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &BASE.replace("cells = 512", "cells = 16"));
    let out = dir.path().join("o");
    let res = telegraph(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let v = read_json(&out.join("solve.json"));
    assert_eq!(v["result"]["mixed_norm_w"], 0.0);
    assert_eq!(v["result"]["report"]["converged"], true);
}

#[test]
fn every_subcommand_runs_on_a_small_setup() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE
        .replace("cells = 512", "cells = 32")
        .replace("kind = \"zero\"", "kind = \"gaussian\"\namplitude = 0.3\nzero_mean = true")
        + "\n[randomization]\nsamples = 200\ntime_nodes = 5\nseed = 3\n";
    let cfg = write_config(dir.path(), &text);
    for (cmd, file) in [
        ("relax", "relaxation.json"),
        ("subkernel", "subkernel.json"),
        ("multipliers", "multipliers.json"),
        ("randomize-mc", "tail_fit.json"),
        ("probe-dispersive", "dispersive.json"),
        ("exponents", "exponents.json"),
    ] {
        let out = dir.path().join(cmd);
        let res = telegraph(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", "2"]);
        let code = res.status.code().unwrap();
        // a failed dispersive check on a coarse grid is still a complete run
        assert!(code == 0 || (cmd == "probe-dispersive" && code == 3), "{cmd}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(out.join(file).exists(), "{cmd}");
        let v = read_json(&out.join(file));
        assert_eq!(v["meta"]["code_version"], env!("CARGO_PKG_VERSION"));
        assert_eq!(v["meta"]["config_hash"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn validation_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &BASE.replace("beta = \"2\"", "beta = \"5/2\""));
    let out = dir.path().join("o");
    let res = telegraph(&["exponents", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["status"], "error");
    assert_eq!(err["kind"], "parameter");
    assert!(!out.join("exponents.json").exists());

    let cfg = write_config(dir.path(), "schema = 1\n[kernel]\nfamily = 3\n");
    assert_eq!(telegraph(&["exponents", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(telegraph(&["exponents"]).status.code(), Some(2));
}

#[test]
fn refused_probe_leaves_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    // s = 2 violates the p-range of the dispersive bound
    let cfg = write_config(dir.path(), &BASE.replace("s = 1", "s = 2").replace("kind = \"zero\"", "kind = \"gaussian\"\nzero_mean = true"));
    let out = dir.path().join("o");
    let res = telegraph(&["probe-dispersive", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, workers) in [(&a, "1"), (&b, "3")] {
        let res = telegraph(&["reproduce-example", "6.3", "--seed", "11", "--workers", workers, "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
    // a different seed changes the tail curve
    let c = dir.path().join("c");
    telegraph(&["reproduce-example", "6.3", "--seed", "12", "--out", c.to_str().unwrap()]);
    assert_ne!(std::fs::read(a.join("tail.csv")).unwrap(), std::fs::read(c.join("tail.csv")).unwrap());
}
