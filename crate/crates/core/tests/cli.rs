//! The command-line binary: exit codes, outputs and determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_autoseqrec"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// ml100k-layout file with 12 users x 10 items, all above the count filter.
fn write_raw(path: &Path) {
    let mut lines = String::new();
    let mut t = 1_000_000;
    for round in 0..8 {
        for u in 1..=12 {
            let item = (u * 3 + round * 7) % 10 + 1;
            lines.push_str(&format!("{u}\t{item}\t4\t{t}\n"));
            t += 7;
        }
    }
    lines.push_str("not a rating line\n");
    fs::write(path, lines).unwrap();
}

fn prepared(dir: &Path) -> String {
    let raw = dir.join("u.data");
    write_raw(&raw);
    let data = dir.join("data");
    let out = run(&["prepare", "--format", "ml100k", "--input", raw.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data.to_str().unwrap().to_string()
}

#[test]
fn prepare_prints_stats_line() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("u.data");
    write_raw(&raw);
    let out = run(&["prepare", "--format", "ml100k", "--input", raw.to_str().unwrap(), "--out", dir.path().join("d").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "users=12 items=10 events=96");
    assert!(dir.path().join("d/events.tsv").exists());
}

#[test]
fn train_eval_recommend_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path());
    let a = dir.path().join("a.asrq");
    let b = dir.path().join("b.asrq");
    for ckpt in [&a, &b] {
        let out = run(&["train", "--input", &data, "--out", ckpt.to_str().unwrap(), "--hidden", "4", "--epochs", "3", "--seed", "42"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(summary["epochs_run"], 3);
        assert!(String::from_utf8_lossy(&out.stderr).contains("epoch=1 l_c="));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap(), "same seed must give identical checkpoints");

    let csv = dir.path().join("events.csv");
    let out = run(&["eval", "--input", &data, "--model", a.to_str().unwrap(), "--per-event-csv", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let mrr = report["mrr"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mrr));
    assert_eq!(report["k"], 10);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count() as u64, report["events"].as_u64().unwrap() + 1);

    let out = run(&["recommend", "--input", &data, "--model", a.to_str().unwrap(), "--user", "3", "--k", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 4);
    for (r, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 3);
        assert_eq!(fields[0], (r + 1).to_string());
        fields[2].parse::<f64>().unwrap();
    }

    // Serving from a snapshot of the same state gives the same list.
    let snap = dir.path().join("state.asrq");
    let model = a.to_str().unwrap();
    let out = run(&["recommend", "--input", &data, "--model", model, "--user", "3", "--k", "4", "--save-state", snap.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["recommend", "--input", &data, "--model", model, "--user", "3", "--k", "4", "--state", snap.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().map(str::to_string).collect::<Vec<_>>(), lines);

    let out = run(&["recommend", "--input", &data, "--model", a.to_str().unwrap(), "--user", "nobody"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path());
    let out = run(&["eval", "--input", &data, "--lambda1", "0.7", "--lambda2", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda1"));
    assert_eq!(run(&["eval", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["prepare", "--format", "netflix", "--input", "x"]).status.code(), Some(1));
    assert_eq!(run(&["eval", "--normalize", "zscore"]).status.code(), Some(1));
    assert_eq!(run(&["eval", "--ablation", "nope"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--hidden", "0"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    assert_eq!(run(&["eval", "--input", missing.to_str().unwrap()]).status.code(), Some(2));
    let data = prepared(dir.path());
    // No checkpoint at the default location yet.
    let out = run(&["eval", "--input", &data]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).contains("panicked"));
}

#[test]
fn help_documents_every_flag() {
    let mut all = String::new();
    for sub in ["prepare", "train", "eval", "grid", "recommend", "bench"] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0));
        all.push_str(&stdout(&out));
    }
    for flag in [
        "--format", "--input", "--out", "--min-count", "--hidden", "--epochs", "--lr", "--batch", "--seed",
        "--lambda1", "--lambda2", "--hops", "--normalize", "--components", "--filter-seen", "--k", "--jobs",
        "--emit-heatmap", "--per-event-csv",
    ] {
        assert!(all.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn grid_and_bench_emit_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path());
    let heat = dir.path().join("heat.csv");
    let out = run(&["grid", "--input", &data, "--hidden", "2,4", "--epochs", "2", "--jobs", "2", "--emit-heatmap", heat.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 132);
    assert_eq!(fs::read_to_string(&heat).unwrap().lines().count(), 12);

    let ckpt = dir.path().join("m.asrq");
    assert!(run(&["train", "--input", &data, "--out", ckpt.to_str().unwrap(), "--hidden", "4", "--epochs", "1"]).status.success());
    let out = run(&["bench", "--input", &data, "--model", ckpt.to_str().unwrap(), "--naive-events", "3", "--scaling", "2,4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["efficiency"]["naive"]["events"], 3);
    assert_eq!(v["scaling"]["mean_us"].as_array().unwrap().len(), 2);
}
