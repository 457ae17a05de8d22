mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn taggnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taggnn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn train_fixture(out: &Path) {
    let o = taggnn(&[
        "train",
        "--config",
        s(&common::fixture_config()),
        "--data",
        s(&common::fixture_dir()),
        "--out",
        s(out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn train_then_eval_writes_a_complete_report() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("model");
    train_fixture(&model);
    for f in ["manifest.json", "params.bin", "splits.tsv", "train_log.jsonl"] {
        assert!(model.join(f).exists(), "{f}");
    }
    let report = tmp.path().join("report.json");
    let o = taggnn(&[
        "eval",
        "--model",
        s(&model),
        "--data",
        s(&common::fixture_dir()),
        "--k",
        "1,3,5",
        "--report",
        s(&report),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    for part in ["without_tags", "partial_tags"] {
        for k in ["p@1", "p@3", "p@5"] {
            let p = v[part][k].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }
    for k in ["config_hash", "seed", "epochs"] {
        assert!(v["meta"].get(k).is_some());
    }
    // the CLI run reproduces the library golden file
    assert_eq!(
        fs::read_to_string(&report).unwrap(),
        fs::read_to_string(common::golden("fixture_report.json")).unwrap()
    );
}

#[test]
fn predict_excludes_linked_tags() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("model");
    train_fixture(&model);
    // i1 is a training item, so all of its tags are linked
    let o = taggnn(&["predict", "--model", s(&model), "--item-id", "i1", "--k", "5"]);
    assert!(o.status.success());
    let tags: Vec<String> = stdout(&o).lines().map(|l| l.split('\t').next().unwrap().to_string()).collect();
    assert_eq!(tags.len(), 5);
    let edges = fs::read_to_string(common::fixture_dir().join("item_tag_edges.tsv")).unwrap();
    let linked: Vec<&str> = edges
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .filter(|(i, _)| *i == "i1")
        .map(|(_, t)| t)
        .collect();
    assert_eq!(linked.len(), 3);
    assert!(tags.iter().all(|t| !linked.contains(&t.as_str())));

    let o = taggnn(&["predict", "--model", s(&model), "--item-id", "nope"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_reports_and_passes() {
    let o = taggnn(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let err: f64 = out.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(out.starts_with("max relative error") && err < 1e-4, "{out}");
}

#[test]
fn usage_errors_exit_with_one() {
    let o = taggnn(&["eval", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(taggnn(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(taggnn(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_config_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"dim": 8, "learnig_rate": 0.1}"#);
    let o = taggnn(&["train", "--config", &cfg, "--data", s(&common::fixture_dir()), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learnig_rate"));
}

#[test]
fn divergence_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"dim": 8, "learning_rate": 1e308, "max_epochs": 5}"#);
    let o = taggnn(&["train", "--config", &cfg, "--data", s(&common::fixture_dir()), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn split_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let data = common::fixture_dir();
        let o = taggnn(&[
            "split", "--data", s(&data), "--train", "60", "--val", "20", "--test", "20", "--seed", "7", "--out", s(&out),
        ]);
        assert!(o.status.success());
        fs::read_to_string(out).unwrap()
    };
    let a = run("a.tsv");
    assert_eq!(a, run("b.tsv"));
    assert_eq!(a.lines().count(), 120);
    assert_eq!(a.lines().filter(|l| l.contains("\ttest_comp\t")).count(), 10);
}

#[test]
fn preprocess_with_zero_thresholds_keeps_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("clean");
    let o = taggnn(&[
        "preprocess",
        "--data",
        s(&common::fixture_dir()),
        "--out",
        s(&out),
        "--item-min-queries",
        "0",
        "--query-min-items",
        "0",
        "--item-min-tags",
        "0",
        "--tag-min-items",
        "0",
        "--word-min-count",
        "1",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "items 120 -> 120, queries 30 -> 30, tags 24 -> 24");
    // default thresholds remove everything from a dataset this small
    let o = taggnn(&["preprocess", "--data", s(&common::fixture_dir()), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ablate_emits_every_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"dim": 8, "max_epochs": 3}"#);
    let report = tmp.path().join("ablation.json");
    let o = taggnn(&[
        "ablate",
        "--config",
        &cfg,
        "--data",
        s(&common::fixture_dir()),
        "--baselines",
        "--report",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let names: Vec<&str> = v["rows"].as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(
        names,
        [
            "taggnn",
            "w/o L2",
            "w/o L2 & TNE",
            "homogeneous",
            "gat",
            "layers=1",
            "layers=2",
            "layers=3",
            "layers=4",
            "fasttext-i",
            "fasttext-qi"
        ]
    );
    assert!(stdout(&o).contains("without@1"));
}
