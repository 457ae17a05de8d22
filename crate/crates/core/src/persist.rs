//! Model directories: `manifest.json` plus `params.bin`.
//!
//! `params.bin` is the concatenation of every parameter tensor in manifest
//! order, each stored row-major as little-endian IEEE-754 f64 with no
//! header or padding. The manifest lists each tensor's name and shape.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::eval::{BaselineMode, BaselineModel, TagScorer};
use crate::error::{Error, Result};
use crate::graph::TripartiteGraph;
use crate::model::{ModelDims, ParamStore, TagGnnModel};
use crate::propagation::ModelVariant;
use crate::training::TrainConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const SPLITS_FILE: &str = "splits.tsv";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const FORMAT_VERSION: u32 = 1;

/// Architecture section of the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Architecture {
    TagGnn { variant: ModelVariant, dims: ModelDims },
    Baseline { mode: BaselineMode },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub architecture: Architecture,
    pub vocab_size: usize,
    /// SHA-256 over the vocabulary tokens; checked against the data at load time.
    pub vocab_fingerprint: String,
    pub config: TrainConfig,
    pub config_hash: String,
    pub epochs_trained: usize,
    pub best_epoch: usize,
    /// Dataset directory the model was trained on.
    pub data_dir: Option<PathBuf>,
    pub tensors: Vec<TensorEntry>,
}

/// Either kind of trained model.
#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    TagGnn(TagGnnModel),
    Baseline(BaselineModel),
}

impl SavedModel {
    pub fn params(&self) -> &ParamStore {
        match self {
            SavedModel::TagGnn(m) => m.params(),
            SavedModel::Baseline(m) => m.params(),
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            SavedModel::TagGnn(m) => Architecture::TagGnn {
                variant: m.variant().clone(),
                dims: m.dims(),
            },
            SavedModel::Baseline(m) => Architecture::Baseline { mode: m.mode() },
        }
    }

    /// Short name used in report metadata.
    pub fn name(&self) -> String {
        match self {
            SavedModel::TagGnn(m) => format!("taggnn-{}", m.variant().kind.as_str()),
            SavedModel::Baseline(m) => match m.mode() {
                BaselineMode::ItemOnly => "fasttext-i".into(),
                BaselineMode::ItemPlusQueries => "fasttext-qi".into(),
            },
        }
    }
}

impl TagScorer for SavedModel {
    fn score_items(&self, graph: &TripartiteGraph, items: &[usize]) -> Result<Vec<Vec<f64>>> {
        match self {
            SavedModel::TagGnn(m) => m.score_items(graph, items),
            SavedModel::Baseline(m) => m.score_items(graph, items),
        }
    }
}

/// Training facts recorded next to the parameters.
#[derive(Clone, Debug)]
pub struct RunInfo {
    pub vocab_size: usize,
    pub vocab_fingerprint: String,
    pub config: TrainConfig,
    pub epochs_trained: usize,
    pub best_epoch: usize,
    pub data_dir: Option<PathBuf>,
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes the manifest and parameter file into `dir`, creating it if needed.
pub fn save_model(dir: impl AsRef<Path>, model: &SavedModel, info: &RunInfo) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let params = model.params();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        architecture: model.architecture(),
        vocab_size: info.vocab_size,
        vocab_fingerprint: info.vocab_fingerprint.clone(),
        config: info.config.clone(),
        config_hash: info.config.hash(),
        epochs_trained: info.epochs_trained,
        best_epoch: info.best_epoch,
        data_dir: info.data_dir.clone(),
        tensors: params
            .names()
            .iter()
            .zip(params.tensors())
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let mut bytes = Vec::with_capacity(params.numel() * 8);
    for t in params.tensors() {
        for x in t.data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    write(dir.join(PARAMS_FILE), &bytes)?;
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write(dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::invalid(format!(
            "{}: unsupported format version {}",
            path.display(),
            manifest.format_version
        )));
    }
    Ok(manifest)
}

/// Reads a model directory written by [`save_model`].
pub fn load_model(dir: impl AsRef<Path>) -> Result<(SavedModel, Manifest)> {
    let dir = dir.as_ref();
    let manifest = load_manifest(dir)?;
    let path = dir.join(PARAMS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let total: usize = manifest.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if bytes.len() != total * 8 {
        return Err(Error::invalid(format!(
            "{}: expected {} bytes, found {}",
            path.display(),
            total * 8,
            bytes.len()
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut params = ParamStore::default();
    for entry in &manifest.tensors {
        let n = entry.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        params.push(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?);
    }
    let model = match &manifest.architecture {
        Architecture::TagGnn { variant, dims } => {
            SavedModel::TagGnn(TagGnnModel::from_params(variant.clone(), *dims, params)?)
        }
        Architecture::Baseline { mode } => SavedModel::Baseline(BaselineModel::from_params(*mode, params)?),
    };
    Ok((model, manifest))
}
