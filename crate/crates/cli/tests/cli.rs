use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_linflow");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("linflow runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn inspect_reports_block_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["inspect", "ieee5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("ieee5"));
}

#[test]
fn quiet_suppresses_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["-q", "gen", "ieee5", "--n", "10"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    assert!(dir.path().join("ieee5_mc.csv").exists());
    assert!(dir.path().join("ieee5_mc.csv.meta.json").exists());
}

#[test]
fn bad_input_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, &["gen", "ieee5", "--n", "0"])), 2);
    assert_eq!(code(&run(d, &["gen", "no_such_case"])), 2);
    assert_eq!(code(&run(d, &["gen", "ieee5", "--n", "10", "--split", "8,5"])), 2);
    assert_eq!(code(&run(d, &["eval", "ieee5", "a.csv", "b.csv", "--engines", "ridge"])), 2);
    assert_eq!(code(&run(d, &["eval", "ieee5", "missing_train.csv", "missing_test.csv"])), 2);
    assert_eq!(code(&run(d, &["surface", "ieee5"])), 2);
    assert_eq!(code(&run(d, &["surface", "two_bus", "--grid", "1"])), 2);
}

#[test]
fn branch_model_has_no_physical_counterpart() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, &["-q", "gen", "ieee5", "--n", "40"])), 0);
    let fit = run(d, &["-q", "fit", "ieee5_mc.csv", "--kind", "branch", "--engine", "ols"]);
    assert_eq!(code(&fit), 0, "{}", stderr(&fit));
    let sim = run(d, &["-q", "similarity", "branch_ols.json", "--case", "ieee5"]);
    assert_eq!(code(&sim), 2);
}

#[test]
fn fixed_voltage_setpoints_make_the_inverse_unidentifiable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("fixed.toml"), "[gen]\nv_setpoint_jitter = 0.0\n").unwrap();
    let gen = run(d, &["-q", "--config", "fixed.toml", "gen", "ieee5", "--n", "40"]);
    assert_eq!(code(&gen), 0, "{}", stderr(&gen));
    let fit = run(d, &["-q", "fit", "ieee5_mc.csv", "--kind", "inverse", "--engine", "ols"]);
    assert_eq!(code(&fit), 3, "{}", stderr(&fit));
    assert!(stderr(&fit).starts_with("error:"));
}

#[test]
fn surface_grid_has_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["-q", "surface", "two_bus", "--grid", "21", "--p-range", "-0.5,0.5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("surface.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("P2,Q2,theta2_ACPF,theta2_DLPF,theta2_DCPF"));
    assert_eq!(lines.count(), 441);
}

#[test]
fn artifact_run_config_replays_the_run() {
    let first = tempfile::tempdir().unwrap();
    let out = run(first.path(), &["-q", "--seed", "4", "surface", "two_bus", "--grid", "5", "--q-range", "-0.2,0.3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.path().join("surface.csv.meta.json")).unwrap()).unwrap();
    let second = tempfile::tempdir().unwrap();
    fs::write(second.path().join("replay.json"), meta["run_config"].to_string()).unwrap();
    let out = run(second.path(), &["-q", "--config", "replay.json", "surface", "two_bus"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in ["surface.csv", "surface.csv.meta.json"] {
        let a = fs::read(first.path().join(name)).unwrap();
        let b = fs::read(second.path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.toml"), "seed = 3\n[gen]\nn = 12\n").unwrap();
    let out = run(d, &["-q", "--config", "c.toml", "gen", "ieee5", "--n", "7", "--name", "x"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = fs::read_to_string(d.join("x.csv")).unwrap().lines().count();
    assert_eq!(rows, 8);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("x.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["run_config"]["seed"], 3);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.toml"), "[gen]\nsamples = 12\n").unwrap();
    assert_eq!(code(&run(d, &["--config", "c.toml", "gen", "ieee5"])), 2);
}
