// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fim")).args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = fim(args);
    assert!(
        out.status.success(),
        "fim {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_writes_one_line_per_example() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(&["synth", "--n", "10", "--k", "5", "--seed", "1", "--out", s(dir.path())]);
    let text = fs::read_to_string(dir.path().join("dataset.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 10);
    let ds = fim_lab::load_jsonl(&dir.path().join("dataset.jsonl")).unwrap();
    assert!(ds.iter().all(|ex| ex.k() == 5));
}

#[test]
fn gold_position_past_k_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fim(&[
        "eval", "--planted", "--k", "5", "--gold-pos", "7", "--out", s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
    assert!(!dir.path().join("eval_vanilla.json").exists());
}

#[test]
fn missing_dataset_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fim(&["eval", "--planted", "--data", s(&dir.path().join("none.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");
}

#[test]
fn planted_hypothesis_holds_without_noise() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(&["hypothesis", "--planted", "--sigma", "0", "--n", "5", "--out", s(dir.path())]);
    assert_eq!(v["condition1"], 1.0);
    assert_eq!(v["condition2"], 1.0);
    assert_eq!(v["fit_linear"], 1.0);
    let stored: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("hypothesis.json")).unwrap()).unwrap();
    assert_eq!(stored["config"]["sigma"], 0.0);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.json");
    fs::write(&conf, r#"{"synth-n": 3, "synth-k": 4, "seed": 11}"#).unwrap();
    ok_json(&["synth", "--config", s(&conf), "--n", "6", "--out", s(dir.path())]);
    let ds = fim_lab::load_jsonl(&dir.path().join("dataset.jsonl")).unwrap();
    assert_eq!(ds.len(), 6);
    assert_eq!(ds[0].k(), 4);
    assert!(ds[0].docs[0].id.starts_with("synth-11-"));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        ok_json(&[
            "eval", "--planted", "--sigma", "0.1", "--n", "6", "--k", "5", "--mode", "all",
            "--out", s(dir.path()),
        ]);
    }
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 13);
    for name in names {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        // the snapshot records the output directory, which differs
        let strip = |v: Vec<u8>, d: &Path| String::from_utf8(v).unwrap().replace(s(d), "OUT");
        assert_eq!(strip(x, a.path()), strip(y, b.path()), "{name:?}");
    }
}

#[test]
fn report_rerenders_saved_eval() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(&["eval", "--planted", "--n", "4", "--k", "4", "--out", s(dir.path())]);
    let out2 = dir.path().join("again");
    ok_json(&[
        "report",
        s(&dir.path().join("eval_vanilla.json")),
        s(&dir.path().join("eval_calibrated.json")),
        "--out",
        s(&out2),
    ]);
    assert_eq!(
        fs::read_to_string(out2.join("curve_vanilla.csv")).unwrap().lines().skip(1).collect::<Vec<_>>(),
        fs::read_to_string(dir.path().join("curve_vanilla.csv")).unwrap().lines().skip(1).collect::<Vec<_>>()
    );
}
