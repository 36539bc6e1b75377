use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_acbench");

fn acbench(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("spawn acbench")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

const FLEET: &str = "seed = 3\nsegments_per_room = 24\n[graded]\nareas = [10.0, 40.0]\nper_level = 3\neer_min = 2.5\neer_max = 4.5\n";

const CONFIG: &str = r#"seed = 9
structures = ["LR-normal", "RT-full"]
[inputs]
telemetry = "telemetry.csv"
weather = "weather.csv"
rooms = "rooms.csv"
[cv]
k_cv = 5
n_cv = 2
[scoring]
sample_size = 200
"#;

fn fleet_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fleet.toml"), FLEET).unwrap();
    ok(&acbench(dir.path(), &["simulate", "--fleet", "fleet.toml", "--dir", "."]));
    fs::write(dir.path().join("cfg.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn simulate_writes_inputs() {
    let dir = fleet_dir();
    for f in ["telemetry.csv", "weather.csv", "rooms.csv", "ground_truth.csv", "run.toml"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let truth = fs::read_to_string(dir.path().join("ground_truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 7);
    assert!(truth.starts_with("room_id,eer_o,c_s2h"));
}

#[test]
fn staged_matches_composed() {
    let dir = fleet_dir();
    let p = dir.path();
    ok(&acbench(p, &["run", "--config", "cfg.toml", "--out", "composed"]));
    for stage in ["ingest", "model", "cluster", "conditions", "score", "report"] {
        ok(&acbench(p, &[stage, "--config", "cfg.toml", "--out", "staged", "--threads", "2"]));
    }
    let mut compared = 0;
    for entry in fs::read_dir(p.join("composed")).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name == "timing.json" || name == "report_cv_mape.csv" {
            continue; // wall-clock timings
        }
        let a = fs::read(p.join("composed").join(&name)).unwrap();
        let b = fs::read(p.join("staged").join(&name)).unwrap();
        assert!(a == b, "{name} differs");
        compared += 1;
    }
    assert!(compared >= 10);
    let scores = fs::read_to_string(p.join("composed/scores.csv")).unwrap();
    assert!(scores.starts_with("# acbench config_hash="));
    assert_eq!(scores.lines().nth(1).unwrap(), "room_id,cluster_id,median_eta,mean_eta,p5_eta,p95_eta,share_of_draws_best,comparative,deterministic_epi_w");
    assert_eq!(scores.lines().count(), 8);
}

#[test]
fn model_rerun_is_byte_identical() {
    let dir = fleet_dir();
    let p = dir.path();
    ok(&acbench(p, &["ingest", "--config", "cfg.toml"]));
    ok(&acbench(p, &["model", "--config", "cfg.toml"]));
    let first = fs::read(p.join("out/selection.json")).unwrap();
    let preds = fs::read(p.join("out/predictors.json")).unwrap();
    ok(&acbench(p, &["model", "--config", "cfg.toml", "--threads", "3"]));
    assert_eq!(first, fs::read(p.join("out/selection.json")).unwrap());
    assert_eq!(preds, fs::read(p.join("out/predictors.json")).unwrap());
    // a different seed moves the CV partitions
    for stage in ["ingest", "model"] {
        ok(&acbench(p, &[stage, "--config", "cfg.toml", "--seed", "10", "--out", "other"]));
    }
    assert_ne!(first, fs::read(p.join("other/selection.json")).unwrap());
}

#[test]
fn sweep_with_explicit_grid() {
    let dir = fleet_dir();
    let p = dir.path();
    ok(&acbench(p, &["run", "--config", "cfg.toml"]));
    let out = acbench(p, &["sweep", "--config", "cfg.toml", "--factor", "t_a", "--grid", "20,30,40", "--rooms", "L1-R1"]);
    ok(&out);
    // 20 and 40 are outside the simulated outdoor range
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let text = fs::read_to_string(p.join("out/sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("L1-R1,1,t_a,20.0,"));

    ok(&acbench(p, &["sweep", "--config", "cfg.toml"]));
    let text = fs::read_to_string(p.join("out/sweep.csv")).unwrap();
    // one best room per cluster, eleven points each
    assert_eq!((text.lines().count() - 2) % 11, 0);
}

fn error_json(out: &Output) -> serde_json::Value {
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.trim()).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.toml"), CONFIG).unwrap();
    let out = acbench(dir.path(), &["ingest", "--config", "cfg.toml"]);
    assert_eq!(out.status.code(), Some(4));
    let e = error_json(&out);
    assert_eq!(e["error"], "io");
    assert!(e["message"].as_str().unwrap().contains("telemetry.csv"));
}

#[test]
fn malformed_rows_are_schema_errors() {
    let dir = fleet_dir();
    let p = dir.path();
    let mut text = fs::read_to_string(p.join("weather.csv")).unwrap();
    text.push_str("1704067200,hot,70,0\n");
    fs::write(p.join("weather.csv"), text).unwrap();
    let out = acbench(p, &["ingest", "--config", "cfg.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "schema");
}

#[test]
fn config_and_usage_errors() {
    let dir = fleet_dir();
    let p = dir.path();
    fs::write(p.join("bad.toml"), "sede = 1\n").unwrap();
    let out = acbench(p, &["ingest", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "config");

    let out = acbench(p, &["model", "--config", "cfg.toml", "--structures", "lr-fancy"]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(acbench(p, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(acbench(p, &["--help"]).status.code(), Some(0));
}

#[test]
fn later_stage_without_artifacts_fails_cleanly() {
    let dir = fleet_dir();
    let out = acbench(dir.path(), &["score", "--config", "cfg.toml"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(error_json(&out)["message"].as_str().unwrap().contains("predictors.json"));
}
