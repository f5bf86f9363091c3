use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rmcq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmcq")).args(args).output().expect("spawn rmcq")
}

fn ok(args: &[&str]) -> String {
    let out = rmcq(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, value: Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small detect-only setup: 30 faults, 30 switching, few epochs.
fn small_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "small.json",
        json!({
            "grid": {"max_faults": 30, "max_switching": 30},
            "tasks": ["detect"],
            "pipeline": {"net": {"epochs": 4, "batch_size": 16}, "relief": {"iterations": 40}},
            "ssl": {"student_epochs": 2}
        }),
    )
}

#[test]
fn gen_single_position_fault_grid_has_360_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", json!({"grid": {"positions": ["p4"], "switch_kinds": []}}));
    let out = dir.path().join("out");
    let stdout = ok(&["gen", "--config", s(&cfg), "--out", s(&out)]);
    assert!(stdout.contains("generated 360 records"), "{stdout}");
    let counts = read_json(&out.join("gen_counts.json"));
    assert_eq!(counts["faults"], 360);
    let manifest = read_json(&out.join("dataset/manifest.json"));
    assert_eq!(manifest.as_array().unwrap().len(), 360);
    assert!(!out.join(".dataset.partial").exists());
}

#[test]
fn empty_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", json!({"grid": {"positions": [], "switch_kinds": []}}));
    let out = rmcq(&["gen", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("o/dataset").exists());
}

#[test]
fn regenerating_gives_byte_identical_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["gen", "--faults", "20", "--switching", "20", "--out", s(&a)]);
    ok(&["gen", "--faults", "20", "--switching", "20", "--out", s(&b)]);
    assert_eq!(fs::read(a.join("dataset/manifest.json")).unwrap(), fs::read(b.join("dataset/manifest.json")).unwrap());
    assert_eq!(fs::read(a.join("dataset/rec_00007.csv")).unwrap(), fs::read(b.join("dataset/rec_00007.csv")).unwrap());
    ok(&["gen", "--faults", "20", "--switching", "20", "--seed", "3", "--out", s(&b)]);
    assert_ne!(fs::read(a.join("dataset/manifest.json")).unwrap(), fs::read(b.join("dataset/manifest.json")).unwrap());
}

#[test]
fn missing_dataset_is_a_clean_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmcq(&["pipeline", "--dataset", "/definitely/not/here", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("configuration error") && err.contains("manifest.json"), "{err}");
    let bad = rmcq(&["gen", "--out", s(dir.path()), "--window-cycles", "-1"]);
    assert_eq!(bad.status.code(), Some(2));
    let unknown = write_config(dir.path(), "u.json", json!({"not_a_field": 1}));
    assert_eq!(rmcq(&["gen", "--config", s(&unknown), "--out", s(dir.path())]).status.code(), Some(2));
}

#[test]
fn flags_override_config_and_land_in_run_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        json!({"seed": 1, "pipeline": {"imaging": "rp"}, "grid": {"max_faults": 10, "max_switching": 10}}),
    );
    let out = dir.path().join("o");
    ok(&["gen", "--config", s(&cfg), "--seed", "5", "--imaging", "gasf", "--snr", "30", "--out", s(&out)]);
    let run = read_json(&out.join("run.json"));
    assert!(run["command"].as_str().unwrap().starts_with("gen"));
    assert_eq!(run["config"]["seed"], 5);
    assert_eq!(run["config"]["grid"]["seed"], 5);
    assert_eq!(run["config"]["pipeline"]["net"]["seed"], 5);
    assert_eq!(run["config"]["pipeline"]["imaging"], "gasf");
    assert_eq!(run["config"]["snr_db"], 30.0);
}

#[test]
fn rerunning_run_json_reproduces_outputs_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["pipeline", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["pipeline", "--config", s(&a.join("run.json")), "--out", s(&b)]);
    for f in
        ["detect/model.bin", "detect/loss_curve.csv", "detect/metrics.json", "detect/confusion.csv", "pipeline.json"]
    {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(read_json(&a.join("run.json"))["config"], read_json(&b.join("run.json"))["config"]);
    let metrics = read_json(&a.join("detect/metrics.json"));
    assert_eq!(metrics["report"]["confusion"].as_array().unwrap().len(), 2);
    let confusion = fs::read_to_string(a.join("detect/confusion.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 3);
}

#[test]
fn stage_by_stage_commands_agree_with_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let data = dir.path().join("data");
    ok(&["gen", "--config", s(&cfg), "--out", s(&data)]);
    let ds = data.join("dataset");
    let out = dir.path().join("stages");
    ok(&["features", "--config", s(&cfg), "--dataset", s(&ds), "--out", s(&out)]);
    let features = fs::read_to_string(out.join("features.csv")).unwrap();
    assert_eq!(features.lines().count(), 61);
    assert_eq!(features.lines().next().unwrap().split(',').count(), 2 + 207);
    ok(&["select", "--config", s(&cfg), "--dataset", s(&ds), "--out", s(&out)]);
    let sel = read_json(&out.join("detect/selection.json"));
    assert_eq!(sel["selected"].as_array().unwrap().len(), 5);
    assert_eq!(fs::read_to_string(out.join("detect/ranking.csv")).unwrap().lines().count(), 70);
    ok(&["image", "--config", s(&cfg), "--dataset", s(&ds), "--out", s(&out)]);
    let index = read_json(&out.join("detect/images.json"));
    assert_eq!(index["entries"].as_array().unwrap().len(), 60);
    let bin = fs::read(out.join("detect/images.bin")).unwrap();
    assert_eq!(bin.len(), 4 + 1 + 4 + 8 + 60 * 15 * 15 * 8);
    ok(&["train", "--config", s(&cfg), "--dataset", s(&ds), "--out", s(&out)]);
    ok(&["eval", "--config", s(&cfg), "--dataset", s(&ds), "--out", s(&out)]);
    let whole = dir.path().join("whole");
    ok(&["pipeline", "--config", s(&cfg), "--dataset", s(&ds), "--out", s(&whole)]);
    assert_eq!(read_json(&out.join("detect/metrics.json")), read_json(&whole.join("detect/metrics.json")));
    assert_eq!(sel["selected"], read_json(&whole.join("detect/metrics.json"))["selected"]);
}

#[test]
fn eval_without_trained_head_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = rmcq(&["eval", "--config", s(&cfg), "--out", s(dir.path()), "--model", s(&dir.path().join("none"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage_cache_is_keyed_by_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("o");
    ok(&["features", "--config", s(&cfg), "--out", s(&out)]);
    let first = fs::read_to_string(out.join("features.csv")).unwrap();
    ok(&["features", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(fs::read_dir(out.join("cache/features")).unwrap().count(), 1);
    assert_eq!(first, fs::read_to_string(out.join("features.csv")).unwrap());
    ok(&["features", "--config", s(&cfg), "--snr", "20", "--out", s(&out)]);
    assert_eq!(fs::read_dir(out.join("cache/features")).unwrap().count(), 2);
    assert_ne!(first, fs::read_to_string(out.join("features.csv")).unwrap());
}

#[test]
fn ssl_grid_rows_and_supervised_bypass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("o");
    ok(&["ssl", "--config", s(&cfg), "--out", s(&out)]);
    let report = read_json(&out.join("ssl_report.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1 + 3 * 3);
    assert_eq!(rows[0]["method"], "supervised");
    assert_eq!(rows[0]["f_u"], 0.0);
    assert!(rows[0]["pseudo_label_accuracy"].is_null());
    for method in ["label_spreading", "label_propagation", "self_training"] {
        let fus: Vec<f64> = rows.iter().filter(|r| r["method"] == method).map(|r| r["f_u"].as_f64().unwrap()).collect();
        assert_eq!(fus, vec![0.2, 0.5, 0.8], "{method}");
    }
    for r in rows {
        for col in ["accuracy", "precision", "recall", "f1", "auroc", "auprc"] {
            assert!(r[col].is_number(), "{col} missing in {r}");
        }
    }
    let search = report["teacher_search"].as_array().unwrap();
    assert_eq!(search.len(), 3 * (18 + 6 + 3) + 1);
}

#[test]
fn relay_trace_exhibits() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["relay-trace", "--out", s(dir.path())]);
    assert!(stdout.contains("bolted_internal: zone1 entry"), "{stdout}");
    assert!(stdout.contains("capacitor_switching: no zone1 entry"), "{stdout}");
    assert!(stdout.contains("remote_high_resistance: no zone1 entry"), "{stdout}");
    let summary = read_json(&dir.path().join("relay/summary.json"));
    assert!(summary[0]["first_zone1_s"].is_number());
    let ag = fs::read_to_string(dir.path().join("relay/bolted_internal/AG.csv")).unwrap();
    assert_eq!(ag.lines().next(), Some("t,element,R,X,zone,indeterminate"));
    assert!(ag.lines().skip(1).all(|l| l.contains(",AG,")));
}

#[test]
fn relay_trace_rejects_records_without_voltages() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen", "--faults", "2", "--switching", "2", "--out", s(&data)]);
    let out = rmcq(&["relay-trace", "--dataset", s(&data.join("dataset")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no voltage channels"));
}

#[test]
fn relay_trace_reads_datasets_with_voltages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "v.json",
        json!({"grid": {"max_faults": 2, "max_switching": 1}, "signal": {"with_voltages": true}, "window_cycles": 4.0}),
    );
    let data = dir.path().join("d");
    ok(&["gen", "--config", s(&cfg), "--out", s(&data)]);
    let out = dir.path().join("o");
    ok(&[
        "relay-trace",
        "--config",
        s(&cfg),
        "--dataset",
        s(&data.join("dataset")),
        "--record",
        "00001",
        "--out",
        s(&out),
    ]);
    let summary = read_json(&out.join("relay/summary.json"));
    assert_eq!(summary.as_array().unwrap().len(), 1);
    assert_eq!(summary[0]["record"], "00001");
}

#[test]
fn imaging_sweep_gives_three_comparable_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("o");
    ok(&["sweep", "--kind", "imaging", "--config", s(&cfg), "--out", s(&out)]);
    let rows = read_json(&out.join("sweep_imaging.json"));
    let settings: Vec<&str> = rows.as_array().unwrap().iter().map(|r| r["setting"].as_str().unwrap()).collect();
    assert_eq!(settings, ["rp", "gasf", "mtf"]);
    for r in rows.as_array().unwrap() {
        assert_eq!(r["report"]["n_samples"], 18);
    }
}

#[test]
fn window_sweep_rejects_stored_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen", "--faults", "4", "--switching", "4", "--out", s(&data)]);
    let out = rmcq(&["sweep", "--kind", "window", "--dataset", s(&data.join("dataset")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}
