#![allow(dead_code)]

use std::path::PathBuf;

use taggnn::data::{make_splits, SplitCounts, TaggingTask};
use taggnn::synthetic::{generate, SyntheticConfig};
use taggnn::training::TrainConfig;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny")
}

pub fn fixture_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny_config.json")
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// 400 generated items split 200/100/100 with the split seed equal to the data seed.
pub fn synthetic_task(cfg: SyntheticConfig) -> TaggingTask {
    let cfg = SyntheticConfig { n_items: 400, ..cfg };
    let seed = cfg.seed;
    let data = generate(&cfg).unwrap();
    let counts = SplitCounts {
        train: 200,
        val: 100,
        test: 100,
    };
    let splits = make_splits(&data.dataset, counts, seed).unwrap();
    TaggingTask::new(data.dataset, splits, 1).unwrap()
}

/// Training settings for the synthetic comparison runs.
pub fn comparison_config(seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 64,
        learning_rate: 0.01,
        max_epochs: 200,
        patience: 30,
        min_epochs: 100,
        seed,
        ..TrainConfig::default()
    }
}
