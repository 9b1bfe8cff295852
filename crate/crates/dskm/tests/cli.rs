//! End-to-end smoke tests of the `dskm` binary: exit codes, determinism,
//! and the train -> predict round trip.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dskm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dskm"))
        .args(args)
        .output()
        .expect("spawn dskm")
}

fn synth_csv(dir: &Path, name: &str, n: usize, seed: u64) -> String {
    let path = dir.join(name);
    let out = dskm(&[
        "synth",
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "synth failed: {out:?}");
    path.to_str().unwrap().to_string()
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth_csv(dir.path(), "a.csv", 64, 3);
    let b = synth_csv(dir.path(), "b.csv", 64, 3);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn train_then_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_csv(dir.path(), "train.csv", 128, 1);
    let test = synth_csv(dir.path(), "test.csv", 16, 2);
    let model = dir.path().join("m.dskm");
    let out = dskm(&[
        "train",
        "--data",
        &data,
        "--model-out",
        model.to_str().unwrap(),
        "--iters",
        "64",
        "--block-size",
        "16",
        "--batch-size",
        "8",
        "--theta",
        "2",
        "--nu",
        "0.5",
        "--bandwidth",
        "median:1",
        "--holdout",
        "0.25",
    ]);
    assert!(out.status.success(), "train failed: {out:?}");
    let metrics = String::from_utf8(out.stdout).unwrap();
    assert!(metrics.starts_with("iteration,"), "metrics header missing");
    assert!(metrics.lines().count() > 3);

    let scores = dir.path().join("scores.csv");
    let out = dskm(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--data",
        &test,
        "--out",
        scores.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "predict failed: {out:?}");
    let s1 = fs::read(&scores).unwrap();
    assert!(s1.starts_with(b"row,"));

    // Repeated prediction is bit-identical.
    let out = dskm(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--data",
        &test,
        "--out",
        scores.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read(&scores).unwrap(), s1);
}

#[test]
fn usage_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_csv(dir.path(), "d.csv", 32, 1);
    let model = dir.path().join("m.dskm");
    let out = dskm(&[
        "train",
        "--data",
        &data,
        "--model-out",
        model.to_str().unwrap(),
        "--loss",
        "no-such-loss",
    ]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn data_error_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.dskm");
    // missing file
    let out = dskm(&[
        "train",
        "--data",
        dir.path().join("nope.csv").to_str().unwrap(),
        "--model-out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");

    // malformed csv
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y,x1\n1.0,not_a_number\n").unwrap();
    let out = dskm(&[
        "train",
        "--data",
        bad.to_str().unwrap(),
        "--model-out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_csv(dir.path(), "d.csv", 64, 1);
    let model = dir.path().join("m.dskm");
    let out = dskm(&[
        "train",
        "--data",
        &data,
        "--model-out",
        model.to_str().unwrap(),
        "--theta",
        "1e6",
        "--nu",
        "1e-6",
        "--iters",
        "512",
        "--block-size",
        "8",
        "--batch-size",
        "8",
    ]);
    assert_eq!(out.status.code(), Some(4), "{out:?}");
}

#[test]
fn corrupted_model_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_csv(dir.path(), "d.csv", 32, 1);
    let model = dir.path().join("m.dskm");
    let out = dskm(&[
        "train",
        "--data",
        &data,
        "--model-out",
        model.to_str().unwrap(),
        "--iters",
        "8",
        "--block-size",
        "4",
        "--theta",
        "1",
        "--nu",
        "0.5",
    ]);
    assert!(out.status.success(), "{out:?}");
    let mut bytes = fs::read(&model).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(&model, bytes).unwrap();
    let scores = dir.path().join("s.csv");
    let out = dskm(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--data",
        &data,
        "--out",
        scores.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn audit_commands_run() {
    let out = dskm(&[
        "audit",
        "--check",
        "coefficients",
        "--theta",
        "2",
        "--nu",
        "0.5",
        "--t-max",
        "500",
    ]);
    assert!(out.status.success(), "{out:?}");
    let out = dskm(&["audit", "--check", "features", "--kernel", "gaussian"]);
    assert!(out.status.success(), "{out:?}");
}
