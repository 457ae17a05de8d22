mod common;

use std::fs;

use taggnn::eval::{BaselineMode, EvalSplit};
use taggnn::persist::MANIFEST_FILE;
use taggnn::pipeline::{train_to_dir, LoadedModel};
use taggnn::training::TrainConfig;

fn small_config() -> TrainConfig {
    TrainConfig {
        dim: 8,
        max_epochs: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn saved_model_reloads_to_the_same_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m");
    train_to_dir(&small_config(), &common::fixture_dir(), &out, None).unwrap();
    let a = LoadedModel::open(&out, None).unwrap();
    let copy = tmp.path().join("copy");
    a.save(&copy).unwrap();
    let b = LoadedModel::open(&copy, Some(&common::fixture_dir())).unwrap();
    assert_eq!(a.model, b.model);
    for split in [EvalSplit::Test, EvalSplit::Validation] {
        let ra = a.report(split, &[1, 3, 5], false).unwrap().to_json().unwrap();
        assert_eq!(ra, b.report(split, &[1, 3, 5], false).unwrap().to_json().unwrap());
    }
}

#[test]
fn baseline_directories_reload() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("b");
    let (model, _) = train_to_dir(&small_config(), &common::fixture_dir(), &out, Some(BaselineMode::ItemOnly)).unwrap();
    let loaded = LoadedModel::open(&out, None).unwrap();
    assert_eq!(loaded.model, model);
    assert_eq!(loaded.model.name(), "fasttext-i");
    let top = loaded.predict("i0", 3).unwrap();
    assert_eq!(top.len(), 3);
    let linked = loaded.task.graph.item_tags(0);
    assert!(top.iter().all(|(t, _)| !linked.contains(t)));
}

#[test]
fn vocabulary_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m");
    train_to_dir(&small_config(), &common::fixture_dir(), &out, None).unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    for entry in fs::read_dir(common::fixture_dir()).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, data.join(p.file_name().unwrap())).unwrap();
    }
    let items = data.join("items.tsv");
    let text = fs::read_to_string(&items).unwrap().replacen("\tc0w3", "\tzebra", 1);
    fs::write(&items, text).unwrap();
    let err = LoadedModel::open(&out, Some(&data)).unwrap_err();
    assert!(err.to_string().contains("vocabulary"), "{err}");
}

#[test]
fn missing_splits_need_config_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    for entry in fs::read_dir(common::fixture_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.file_name().unwrap() != "splits.tsv" {
            fs::copy(&p, data.join(p.file_name().unwrap())).unwrap();
        }
    }
    let out = tmp.path().join("m");
    let err = train_to_dir(&small_config(), &data, &out, None).unwrap_err();
    assert!(err.to_string().contains("splits"));

    let cfg = TrainConfig::from_json(r#"{"dim": 8, "max_epochs": 2, "splits": {"train": 60, "val": 20, "test": 20}}"#).unwrap();
    train_to_dir(&cfg, &data, &out, None).unwrap();
    assert!(out.join(MANIFEST_FILE).exists());
    let splits = fs::read_to_string(out.join("splits.tsv")).unwrap();
    assert_eq!(splits.lines().filter(|l| l.contains("\tunused")).count(), 20);
}
