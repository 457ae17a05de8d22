//! Directory-level train / load / evaluate / predict shared by the CLI and
//! the Python bindings.

use std::fs;
use std::path::Path;

use crate::data::{load_dataset, make_splits, SplitAssignment, TaggingTask};
use crate::error::{Error, Result};
use crate::eval::{evaluate, predict_topk, train_baseline, BaselineMode, EvalReport, EvalSplit, ReportMeta, TagScorer};
use crate::persist::{load_model, save_model, Manifest, RunInfo, SavedModel, LOG_FILE, SPLITS_FILE};
use crate::training::{train, TrainConfig, TrainLog};

/// Builds the task from `data`, reading `DATA/splits.tsv` when present and
/// drawing a split from `cfg.splits` otherwise.
pub fn task_for_training(data: &Path, cfg: &TrainConfig) -> Result<TaggingTask> {
    let ds = load_dataset(data)?;
    let path = data.join(SPLITS_FILE);
    let splits = if path.exists() {
        SplitAssignment::load(&path, &ds)?
    } else {
        let counts = cfg
            .splits
            .ok_or_else(|| Error::invalid(format!("{} missing and config has no `splits`", path.display())))?;
        make_splits(&ds, counts, cfg.seed)?
    };
    TaggingTask::new(ds, splits, cfg.min_count)
}

/// Trains on `data` and writes model, splits and log into `out`.
pub fn train_to_dir(
    cfg: &TrainConfig,
    data: &Path,
    out: &Path,
    baseline: Option<BaselineMode>,
) -> Result<(SavedModel, TrainLog)> {
    let task = task_for_training(data, cfg)?;
    let (model, log) = match baseline {
        None => {
            let (m, log) = train(&task, cfg)?;
            (SavedModel::TagGnn(m), log)
        }
        Some(mode) => {
            let (m, log) = train_baseline(&task, mode, cfg)?;
            (SavedModel::Baseline(m), log)
        }
    };
    let info = RunInfo {
        vocab_size: task.vocab.len(),
        vocab_fingerprint: task.vocab.fingerprint(),
        config: cfg.clone(),
        epochs_trained: log.epochs.len(),
        best_epoch: log.best_epoch,
        data_dir: Some(fs::canonicalize(data).unwrap_or_else(|_| data.to_path_buf())),
    };
    save_model(out, &model, &info)?;
    task.splits.save(out.join(SPLITS_FILE), &task.dataset)?;
    let log_path = out.join(LOG_FILE);
    fs::write(&log_path, log.to_lines()).map_err(|e| Error::io(log_path, e))?;
    Ok((model, log))
}

/// A saved model together with the task it was trained on.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: SavedModel,
    pub manifest: Manifest,
    pub task: TaggingTask,
}

impl LoadedModel {
    /// Loads `model_dir`; `data` defaults to the directory recorded at
    /// training time. Fails if the data's vocabulary differs from the model's.
    pub fn open(model_dir: &Path, data: Option<&Path>) -> Result<Self> {
        let (model, manifest) = load_model(model_dir)?;
        let data = data
            .map(Path::to_path_buf)
            .or_else(|| manifest.data_dir.clone())
            .ok_or_else(|| Error::invalid("no data directory given and none recorded in the manifest"))?;
        let ds = load_dataset(&data)?;
        let splits = SplitAssignment::load(model_dir.join(SPLITS_FILE), &ds)?;
        let task = TaggingTask::new(ds, splits, manifest.config.min_count)?;
        if task.vocab.fingerprint() != manifest.vocab_fingerprint {
            return Err(Error::invalid(format!(
                "vocabulary of {} does not match the model",
                data.display()
            )));
        }
        Ok(Self { model, manifest, task })
    }

    /// Writes the model and its splits into another directory.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let m = &self.manifest;
        let info = RunInfo {
            vocab_size: m.vocab_size,
            vocab_fingerprint: m.vocab_fingerprint.clone(),
            config: m.config.clone(),
            epochs_trained: m.epochs_trained,
            best_epoch: m.best_epoch,
            data_dir: m.data_dir.clone(),
        };
        save_model(dir, &self.model, &info)?;
        self.task.splits.save(dir.join(SPLITS_FILE), &self.task.dataset)
    }

    /// Report for `split`; `remove_known_tags` drops completion items'
    /// known-tag edges from the graph first.
    pub fn report(&self, split: EvalSplit, ks: &[usize], remove_known_tags: bool) -> Result<EvalReport> {
        let stripped = remove_known_tags.then(|| self.task.graph_without_known_tags());
        let meta = ReportMeta {
            model: self.model.name(),
            split,
            config_hash: self.manifest.config_hash.clone(),
            seed: self.manifest.config.seed,
            epochs: self.manifest.epochs_trained,
        };
        evaluate(&self.model, &self.task, stripped.as_ref(), ks, meta)
    }

    /// Top-`k` `(tag index, score)` for an item, never returning a tag
    /// already linked to it in the graph.
    pub fn predict(&self, item_id: &str, k: usize) -> Result<Vec<(usize, f64)>> {
        let item = self
            .task
            .dataset
            .item_index(item_id)
            .ok_or_else(|| Error::invalid(format!("unknown item id '{item_id}'")))?;
        let scores = self.model.score_items(&self.task.graph, &[item])?;
        let linked = self.task.graph.item_tags(item);
        Ok(predict_topk(&scores[0], k, &linked)?
            .into_iter()
            .map(|t| (t, scores[0][t]))
            .collect())
    }
}
