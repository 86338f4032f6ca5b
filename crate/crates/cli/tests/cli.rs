mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{get_json, Server, BIN};

fn glyphforge(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).output().expect("run glyphforge")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn synth(dir: &Path, classes: &str, per_class: &str, size: &str) {
    let out = glyphforge(&["dataset", "synth", "--classes", classes, "--per-class", per_class, "--seed", "3", "--size", size, "--out", "data"], dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&glyphforge(&["train", "--arch", "vgg16", "--manifest", "m.jsonl"], d)), 2);
    assert_eq!(code(&glyphforge(&["dataset", "synth", "--classes", "1", "--per-class", "1", "--out", "x"], d)), 2);
    assert_eq!(code(&glyphforge(&["eval", "--method", "cnn7", "--report", "table9", "--manifest", "m"], d)), 2);
    assert_eq!(code(&glyphforge(&["extract", "lbp", "--manifest", "m", "--grid", "0x"], d)), 2);

    synth(d, "3", "3", "16");
    let m = "data/manifest.jsonl";
    assert_eq!(code(&glyphforge(&["dataset", "split", "--manifest", m, "--test-fraction", "1.5"], d)), 2);
    assert_eq!(code(&glyphforge(&["extract", "lbp", "--manifest", m, "--P", "2"], d)), 2);
    let missing = glyphforge(&["fuse", "--preset", "DCF-AR", "--manifest", m], d);
    assert_eq!(code(&missing), 2, "{}", String::from_utf8_lossy(&missing.stderr));
    assert_eq!(code(&glyphforge(&["fuse", "--preset", "DCF-XY", "--manifest", m], d)), 2);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&glyphforge(&["dataset", "stats", "--manifest", "absent.jsonl"], d)), 3);
    assert_eq!(code(&glyphforge(&["serve", "--port", "0", "--manifest", "absent.jsonl"], d)), 3);
    std::fs::write(d.join("bad.jsonl"), "not json\n").unwrap();
    assert_eq!(code(&glyphforge(&["dataset", "stats", "--manifest", "bad.jsonl"], d)), 3);

    synth(d, "3", "3", "16");
    // No split yet: every sample is in train, so there is nothing to evaluate.
    let out = glyphforge(&["train", "--arch", "cnn7", "--epochs", "1", "--width", "0.125", "--input-size", "16", "--manifest", "data/manifest.jsonl"], d);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dataset_and_extract_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "4", "5", "24");
    let m = "data/manifest.jsonl";

    let stats = glyphforge(&["dataset", "stats", "--manifest", m], d);
    assert_eq!(code(&stats), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&stats)).unwrap();
    assert_eq!(v["samples"], 20);
    assert_eq!(v["histogram"]["num_classes"], 4);

    let split = glyphforge(&["dataset", "split", "--manifest", m, "--test-fraction", "0.2", "--seed", "1", "--out", "split.jsonl"], d);
    assert_eq!(code(&split), 0);
    assert!(stdout(&split).starts_with("16 train, 4 test"));

    let out = glyphforge(&["extract", "lbp", "--manifest", "split.jsonl", "--P", "8", "--R", "1", "--grid", "2x2", "--out", "f.jsonl"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let lines = std::fs::read_to_string(d.join("f.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 20);
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["features"].as_array().unwrap().len(), 4 * 59);
}

#[test]
fn train_fuse_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "3", "4", "16");
    let m = "data/manifest.jsonl";
    assert_eq!(code(&glyphforge(&["dataset", "split", "--manifest", m, "--test-fraction", "0.25", "--seed", "2"], d)), 0);
    let net = ["--epochs", "2", "--batch-size", "4", "--lr", "0.001", "--width", "0.125", "--input-size", "16", "--seed", "5"];

    let mut args = vec!["train", "--arch", "cnn7", "--manifest", m, "--out", "a.glyf"];
    args.extend(net);
    let out = glyphforge(&args, d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("cnn7: accuracy"));
    let again = glyphforge(&args, d);
    assert!(stdout(&again).contains("reused checkpoint"));

    let mut args = vec!["train", "--arch", "cnn9", "--manifest", m, "--out", "b.glyf"];
    args.extend(net);
    assert_eq!(code(&glyphforge(&args, d)), 0);

    for combiner in ["soft", "hard", "nb"] {
        let out = glyphforge(&["fuse", "--preset", "DCF-LA", "--members", "lenet=a.glyf,alexnet=b.glyf", "--combiner", combiner, "--manifest", m], d);
        assert_eq!(code(&out), 0, "{combiner}: {}", String::from_utf8_lossy(&out.stderr));
    }

    let mut args = vec!["eval", "--method", "cnn7", "--method", "cnn9", "--report", "table3", "--manifest", m, "--out", "report"];
    args.extend(net);
    let out = glyphforge(&args, d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("| Method | cnn7 | cnn9 |"));
    assert!(std::fs::read_to_string(d.join("report.csv")).unwrap().starts_with("method,accuracy_percent\ncnn7,"));

    let out = glyphforge(&["eval", "--method", "lbp+svm", "--report", "table2", "--manifest", m], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn serve_answers_on_reported_port() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2", "3", "16");
    let server = Server::start(&dir.path().join("data/manifest.jsonl"), false);
    let (status, page) = get_json(&server.addr, "/api/samples?page_size=2");
    assert_eq!(status, 200);
    assert_eq!(page["total"], 6);
    assert_eq!(page["items"].as_array().unwrap().len(), 2);
    let (status, err) = get_json(&server.addr, "/api/samples/nope");
    assert_eq!(status, 404);
    assert_eq!(err["error"], "unknown_sample");
}
