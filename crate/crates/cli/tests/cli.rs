use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aoi-uav-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn error_json(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.cfg");
    fs::write(&path, "M: 1\nN: 1\nK: 1\nN_f: 30\nlink_samples: 500\n").unwrap();
    path.display().to_string()
}

#[test]
fn unknown_experiment_exits_nonzero_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["run", "--experiment", "fig9", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"], "unknown_experiment");
    assert!(err["message"].as_str().unwrap().contains("fig9"));
}

#[test]
fn invalid_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "phi_deg: 120\n").unwrap();
    let out = sim(&[
        "run",
        "--experiment",
        "dv_sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "config");
}

#[test]
fn run_writes_the_csv_it_prints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = sim(&[
        "run",
        "--experiment",
        "k_sweep",
        "--config",
        &cfg,
        "--seeds",
        "1,2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed = String::from_utf8(out.stdout).unwrap();
    let path = printed.trim();
    let text = fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# aoi-uav-sim k_sweep v1\n"));
    // seven default K values times two seeds, plus the header
    assert_eq!(text.lines().count(), 2 + 7 * 2);
}

#[test]
fn trace_has_a_row_per_uav_and_frame() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let trace = dir.path().join("trace.csv");
    let out = sim(&[
        "trace",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().next().unwrap(), "frame,uav,x,y,z,stage,remaining_data,aoi,channel");
    assert_eq!(text.lines().count(), 1 + 2 * 31);
}
