use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TWO_TASKS: &str =
    r#"{"tasks": [{"id": 1, "fps": 6}, {"id": 2, "fps": 4}], "horizon_ms": 5000}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rtmot"));
    c.env_remove("RTMOT_SEED");
    c
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn analyze_reports_response_times() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", TWO_TASKS);
    let o = bin()
        .args(["analyze", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    let tasks = &v["tasksets"][0]["policies"][0]["tasks"];
    assert_eq!(tasks[0]["R_i_us"], 58_000);
    assert_eq!(tasks[1]["R_i_us"], 58_000);
    assert_eq!(tasks[0]["schedulable"], true);
}

#[test]
fn analyze_exit_code_tracks_verdict() {
    let dir = tempfile::tempdir().unwrap();
    // C^HH = 57.7 ms against 9/7 FPS fails; LL stays schedulable
    let cfg = write(dir.path(), "c.json", r#"{"fps_sets": [[9, 7]]}"#);
    let o = bin()
        .args(["analyze", "--policy", "flex", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let o = bin()
        .args(["analyze", "--policy", "static-HH", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert_eq!(
        stdout_json(&o)["tasksets"][0]["policies"][0]["schedulable"],
        false
    );
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "e.json", r#"{"tasks": []}"#);
    let o = bin()
        .args(["analyze", "--config"])
        .arg(&empty)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let bad = write(
        dir.path(),
        "b.json",
        r#"{"tasks": [{"id": 1}], "bogus": 3}"#,
    );
    let o = bin()
        .args(["analyze", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = bin()
        .args(["analyze", "--config"])
        .arg(dir.path().join("missing.json"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = bin()
        .args(["simulate", "--policy", "fastest", "--config"])
        .arg(&empty)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", TWO_TASKS);
    let out = dir.path().join("out");
    let o = bin()
        .args(["simulate", "--policy", "flex", "--seed", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(
        trace.lines().next().unwrap(),
        "t_us,task,job_idx,pair,budget_us,actual_us,inverted,miss"
    );
    let metrics: Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["miss_count"], 0);
    assert_eq!(metrics["seed"], 3);
    let hist = &metrics["pair_histogram"];
    let total: u64 = ["LL", "LH", "HL", "HH"]
        .iter()
        .map(|k| hist[k].as_u64().unwrap())
        .sum();
    assert_eq!(total as usize, trace.lines().count() - 1);
    assert_eq!(metrics["tasks"].as_array().unwrap().len(), 2);
    assert!(metrics["tasks"][0]["mean_confidence"].as_f64().is_some());
    assert!(out.join("confidence.csv").exists());
    assert!(out.join("scenario.json").exists());
}

#[test]
fn simulate_is_deterministic_and_honours_seed_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", TWO_TASKS);
    let run = |name: &str, seed: Option<&str>| {
        let out = dir.path().join(name);
        let mut c = bin();
        c.args(["simulate", "--exec-model", "stochastic:0.5", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out);
        if let Some(s) = seed {
            c.env("RTMOT_SEED", s);
        }
        assert_eq!(code(&c.output().unwrap()), 0);
        (
            fs::read_to_string(out.join("trace.csv")).unwrap(),
            fs::read_to_string(out.join("metrics.json")).unwrap(),
        )
    };
    let a = run("a", Some("11"));
    let b = run("b", Some("11"));
    let c = run("c", Some("12"));
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
    assert!(a.1.contains("\"seed\": 11"));
}

#[test]
fn simulate_refuses_unschedulable_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"tasks": [{"id": 1, "fps": 20}, {"id": 2, "fps": 15}], "horizon_ms": 1000}"#,
    );
    let out = dir.path().join("out");
    let o = bin()
        .args(["simulate", "--policy", "min", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(!out.join("trace.csv").exists());
    let o = bin()
        .args(["simulate", "--policy", "min", "--force", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.lines().skip(1).any(|l| l.ends_with(",true")));
}

#[test]
fn simulate_needs_a_taskset_label_for_grids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"fps_sets": [[6, 4], [7, 5]], "horizon_ms": 2000}"#,
    );
    let o = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = bin()
        .args(["simulate", "--taskset", "7/5", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn sweep_writes_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"fps_sets": [[6, 4], [10, 8]], "policies": ["min", "flex", "static-HH"],
            "seeds": [1, 2], "horizon_ms": 3000}"#,
    );
    let out = dir.path().join("out");
    let o = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let cells = report["cells"].as_array().unwrap();
    let hh = cells
        .iter()
        .find(|c| c["taskset"] == "10/8" && c["policy"] == "static-HH")
        .unwrap();
    assert_eq!(hh["schedulable"], false);
    assert_eq!(hh["simulated"], false);
    let flex = cells
        .iter()
        .find(|c| c["taskset"] == "10/8" && c["policy"] == "flex")
        .unwrap();
    assert_eq!(flex["schedulable"], true);
    assert_eq!(flex["runs"], 2);
}

#[test]
fn sweep_seed_env_collapses_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"fps_sets": [[6, 4]], "policies": ["flex"], "seeds": [1, 2, 3], "horizon_ms": 2000}"#,
    );
    let out = dir.path().join("out");
    let o = bin()
        .env("RTMOT_SEED", "5")
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(report["cells"][0]["runs"], 1);
    assert_eq!(report["cells"][0]["per_seed"][0]["seed"], 5);
}

#[test]
fn empty_sweep_grid_is_a_noop() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"fps_sets": []}"#);
    let out = dir.path().join("out");
    let o = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty sweep grid"));
    assert!(!out.exists());
}

#[test]
fn verify_small_suites_pass() {
    let o = bin()
        .args([
            "verify",
            "--seed",
            "9",
            "--sets",
            "50",
            "--snapshots",
            "300",
            "--flex-sets",
            "5",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let last = String::from_utf8_lossy(&o.stdout)
        .lines()
        .last()
        .unwrap()
        .to_string();
    let v: Value = serde_json::from_str(&last).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["rta"]["sets"], 50);
    assert_eq!(v["rta"]["disagreements"], 0);
    assert_eq!(v["gate"]["violations"], 0);
}

#[test]
fn bad_seed_env_is_a_config_error() {
    let o = bin()
        .env("RTMOT_SEED", "-1")
        .args(["verify", "--suite", "rta", "--sets", "5"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
