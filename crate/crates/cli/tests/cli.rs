//! End-to-end runs of the binary: exit codes, artifact shapes, determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_levydiv")
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL_AUX: &str = r#"
[problem]
kind = "aux"
discount = 0.3
terminal_rate = 0.4
decision_rate = 1.5
injection_cost = 1.5

[problem.model]
drift = 0.1
volatility = 1.0

[problem.payoff]
knots = [[0.0, 0.0], [2.0, 2.0]]
tail_slope = 0.0

[solver]
grid_points = 400

[oracle]
n_paths = 20000
seed = 5
"#;

#[test]
fn solve_aux_emits_table_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "p.toml", SMALL_AUX);
    let out = dir.path().join("res");
    let r = run(&[
        "solve-aux",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let table = fs::read_to_string(out.join("value_table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "x,state,value,derivative,above_barrier");
    assert_eq!(lines.len(), 1 + 400); // header + grid rows
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("optimal barrier b*"));
    assert!(summary.contains("smooth fit"));
}

#[test]
fn solve_aux_without_terminal_payoff() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMALL_AUX
        .replace("terminal_rate = 0.4", "terminal_rate = 0.0")
        .replace("knots = [[0.0, 0.0], [2.0, 2.0]]", "knots = [[0.0, 0.0]]")
        .replace("tail_slope = 0.0", "tail_slope = 0.0");
    let cfg = write_cfg(dir.path(), "p.toml", &cfg);
    let out = dir.path().join("res");
    let r = run(&[
        "solve-aux",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let stdout = String::from_utf8_lossy(&r.stdout);
    let b: f64 = stdout
        .lines()
        .find(|l| l.starts_with("b* = "))
        .unwrap()
        .trim_start_matches("b* = ")
        .parse()
        .unwrap();
    assert!(b.is_finite() && b > 0.0);
}

#[test]
fn config_errors_exit_2_with_named_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL_AUX.replace("injection_cost = 1.5", "injection_cost = 0.9");
    let cfg = write_cfg(dir.path(), "bad.toml", &bad);
    let r = run(&["solve-aux", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("injection_cost"), "{err}");

    // generator row not summing to zero
    let bad_regime = r#"
[problem]
kind = "regime"
decision_rate = 1.0
injection_cost = 1.5
generator = [[-0.3, 0.4], [0.4, -0.4]]
switch_jumps = [[{ kind = "none" }, { kind = "none" }], [{ kind = "none" }, { kind = "none" }]]

[[problem.states]]
discount = 0.25
[problem.states.model]
drift = 0.1
volatility = 1.0

[[problem.states]]
discount = 0.3
[problem.states.model]
drift = 0.1
volatility = 1.0
"#;
    let cfg = write_cfg(dir.path(), "badr.toml", bad_regime);
    let r = run(&["solve-regime", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("generator"));
}

#[test]
fn simulate_is_deterministic_and_schema_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "p.toml", SMALL_AUX);
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let r = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--quantity",
            "npv",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let a = fs::read(out1.join("mc_npv.csv")).unwrap();
    let b = fs::read(out2.join("mc_npv.csv")).unwrap();
    assert_eq!(a, b, "same seed and config must give identical bytes");
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("quantity,x0,state,mean,std_error,n_paths,formula_value,z_score"));
    assert_eq!(text.lines().count(), 1 + 5);
}

#[test]
fn verify_fast_passes_on_reference_instance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let r = run(&[
        "verify",
        "--config",
        repo_config("aux_brownian.toml").to_str().unwrap(),
        "--fast",
        "--out",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(
        r.status.success(),
        "stdout:\n{stdout}\nstderr:\n{}",
        String::from_utf8_lossy(&r.stderr)
    );
    assert!(stdout.contains("check scale_laplace: PASS"));
    assert!(stdout.contains("check smooth_fit: PASS"));
    assert!(stdout.contains("check hjb_residual: PASS"));
    assert!(out.join("verify.csv").exists());
}

#[test]
fn solve_regime_emits_per_state_table() {
    let dir = tempfile::tempdir().unwrap();
    // shrink the shipped three-state instance for test speed
    let text = fs::read_to_string(repo_config("regime_three_state.toml")).unwrap();
    let text = text
        .replace("grid_points = 2000", "grid_points = 500")
        .replace("tolerance = 1e-8", "tolerance = 1e-6");
    let cfg = write_cfg(dir.path(), "r.toml", &text);
    let out = dir.path().join("res");
    let r = run(&[
        "solve-regime",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let table = fs::read_to_string(out.join("value_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 3 * 500); // header + grid × states
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("contraction constant K"));
    assert!(summary.contains("b*(2)"));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("K = "));
}

#[test]
fn convergence_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(repo_config("regime_three_state.toml")).unwrap();
    let text = text
        .replace("grid_points = 2000", "grid_points = 300")
        .replace("max_iter = 400", "max_iter = 2");
    let cfg = write_cfg(dir.path(), "r.toml", &text);
    let r = run(&["solve-regime", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("no convergence"));
}
