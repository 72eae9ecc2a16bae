use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pulse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pulse"))
        .args(args)
        .env_remove("PULSE_OUT_DIR")
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn pulse")
}

fn ok(args: &[&str]) -> Output {
    let out = pulse(args);
    assert!(
        out.status.success(),
        "pulse {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Half a day of the stress profile with its injections.
fn synth(dir: &Path) -> PathBuf {
    let out = dir.join("synth");
    ok(&["-q", "synth", "--preset", "stress", "--days", "0.5", "--seed", "3", "--out", s(&out)]);
    out
}

fn train(synth: &Path, out: &Path) {
    ok(&[
        "-q",
        "train",
        "--data",
        s(&synth.join("data.csv")),
        "--schema",
        s(&synth.join("schema.cfg")),
        "--window",
        "stress",
        "--epochs",
        "1",
        "--out",
        s(out),
    ]);
}

#[test]
fn synth_writes_data_schema_and_ground_truth() {
    let tmp = TempDir::new().unwrap();
    let dir = synth(tmp.path());
    for f in ["data.csv", "schema.cfg", "labels.csv", "injections.json", "profile.cfg"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let header = fs::read_to_string(dir.join("data.csv")).unwrap();
    let header = header.lines().next().unwrap();
    for ch in ["hr", "hrv", "steps", "co2"] {
        assert!(header.contains(ch), "{header}");
    }
}

#[test]
fn missing_schema_is_a_usage_error_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let dir = synth(tmp.path());
    let missing = tmp.path().join("nowhere/roles.cfg");
    let out = pulse(&[
        "train",
        "--data",
        s(&dir.join("data.csv")),
        "--schema",
        s(&missing),
        "--out",
        s(&tmp.path().join("m")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(s(&missing)), "{err}");
    assert_eq!(err.trim().lines().count(), 1, "{err}");
}

#[test]
fn train_detect_report_round_trip() {
    let tmp = TempDir::new().unwrap();
    let dir = synth(tmp.path());
    let model = tmp.path().join("model");
    train(&dir, &model);
    assert!(model.join("model.ckpt").is_file());
    assert!(model.join("model.manifest").is_file());

    let detect = tmp.path().join("detect");
    let out = ok(&[
        "detect",
        "--data",
        s(&dir.join("data.csv")),
        "--schema",
        s(&dir.join("schema.cfg")),
        "--model",
        s(&model),
        "--threshold-fallback-only",
        "--q",
        "0.01",
        "--out",
        s(&detect),
    ]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("empirical"), "no fallback warning in: {err}");
    let th: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(detect.join("threshold.json")).unwrap()).unwrap();
    assert_eq!(th[0]["threshold"]["fallback"], serde_json::Value::Bool(true));
    assert!(detect.join("scores.csv").is_file());

    let events = fs::read_to_string(detect.join("events.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(events.lines().next().expect("some events")).unwrap();
    let report = tmp.path().join("report");
    ok(&[
        "-q",
        "report",
        "--events",
        s(&detect.join("events.jsonl")),
        "--data",
        s(&dir.join("data.csv")),
        "--schema",
        s(&dir.join("schema.cfg")),
        "--out",
        s(&report),
    ]);
    let prompt = fs::read_to_string(report.join("event_001.prompt.txt")).unwrap();
    for ch in first["channels_ranked"].as_array().unwrap() {
        assert!(prompt.contains(ch.as_str().unwrap()));
    }
    let start = first["start"].as_str().unwrap();
    assert!(prompt.contains(start), "no start time in prompt");
    assert!(prompt.len() <= 8000);
    assert!(report.join("event_001.csv").is_file());
    let summary = fs::read_to_string(report.join("summary.txt")).unwrap();
    assert!(summary.starts_with(&format!("{} events", events.lines().count())));
}

#[test]
fn zero_events_give_an_empty_bundle() {
    let tmp = TempDir::new().unwrap();
    let dir = synth(tmp.path());
    let events = tmp.path().join("events.jsonl");
    fs::write(&events, "").unwrap();
    let report = tmp.path().join("report");
    ok(&[
        "-q",
        "report",
        "--events",
        s(&events),
        "--data",
        s(&dir.join("data.csv")),
        "--schema",
        s(&dir.join("schema.cfg")),
        "--out",
        s(&report),
    ]);
    let files: Vec<_> = fs::read_dir(&report).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, ["summary.txt"]);
    assert!(fs::read_to_string(report.join("summary.txt")).unwrap().starts_with("0 events"));
}

#[test]
fn eval_writes_a_report() {
    let tmp = TempDir::new().unwrap();
    let dir = synth(tmp.path());
    let out = tmp.path().join("eval");
    ok(&[
        "-q",
        "eval",
        "--data",
        s(&dir.join("data.csv")),
        "--schema",
        s(&dir.join("schema.cfg")),
        "--labels",
        s(&dir.join("labels.csv")),
        "--folds",
        "2",
        "--window",
        "stress",
        "--epochs",
        "1",
        "--out",
        s(&out),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("eval_report.json")).unwrap()).unwrap();
    assert!(report.is_object());
}

#[test]
fn interpolate_fills_short_gaps_only() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("in.csv");
    let mut rows = String::from("timestamp,hr\n");
    for i in 0..40 {
        let v = if (10..13).contains(&i) || (20..28).contains(&i) {
            String::new()
        } else {
            format!("{}", 60 + i)
        };
        rows += &format!("{},{v}\n", 1_700_000_000 + 60 * i);
    }
    fs::write(&csv, rows).unwrap();
    let schema = tmp.path().join("roles.cfg");
    fs::write(&schema, "channel.hr = target\n").unwrap();
    let out = tmp.path().join("out");
    ok(&["-q", "interpolate", "--data", s(&csv), "--schema", s(&schema), "--interp", "nearest-neighbor", "--out", s(&out)]);
    let written = fs::read_dir(&out).unwrap().next().unwrap().unwrap().path();
    let body = fs::read_to_string(written).unwrap();
    let cells: Vec<&str> = body.lines().skip(1).map(|l| l.split(',').nth(1).unwrap_or("")).collect();
    assert_eq!(cells.len(), 40);
    for (i, c) in cells.iter().enumerate() {
        if (20..28).contains(&i) {
            assert!(c.is_empty(), "row {i}: {c}");
        } else if (10..13).contains(&i) {
            let v: f64 = c.parse().unwrap();
            assert!(v == 69.0 || v == 73.0, "row {i}: {v}");
        } else {
            let v: f64 = c.parse().unwrap();
            assert!((v - (60 + i) as f64).abs() < 1e-9, "row {i}: {v}");
        }
    }
}
