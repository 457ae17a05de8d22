use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use taggnn::eval::{BaselineMode, EvalSplit};
use taggnn::pipeline::{train_to_dir, LoadedModel};
use taggnn::synthetic::{generate, SyntheticConfig};
use taggnn::training::TrainConfig;

fn py_err(e: taggnn::Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// A trained model directory plus the dataset it was trained on.
#[pyclass(name = "Model")]
struct Model {
    inner: LoadedModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (path, data=None))]
    fn load(path: PathBuf, data: Option<PathBuf>) -> PyResult<Self> {
        let inner = LoadedModel::open(&path, data.as_deref()).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Report JSON for "test" or "validation".
    #[pyo3(signature = (k=vec![1, 3, 5], split="test", remove_known_tags=false))]
    fn evaluate(&self, k: Vec<usize>, split: &str, remove_known_tags: bool) -> PyResult<String> {
        let split = match split {
            "test" => EvalSplit::Test,
            "validation" => EvalSplit::Validation,
            other => return Err(PyValueError::new_err(format!("unknown split '{other}'"))),
        };
        self.inner
            .report(split, &k, remove_known_tags)
            .and_then(|r| r.to_json())
            .map_err(py_err)
    }

    /// Top-k `(tag_id, score)` pairs, excluding tags already linked to the item.
    #[pyo3(signature = (item_id, k=5))]
    fn predict(&self, item_id: &str, k: usize) -> PyResult<Vec<(String, f64)>> {
        let tags = &self.inner.task.dataset.tags;
        Ok(self
            .inner
            .predict(item_id, k)
            .map_err(py_err)?
            .into_iter()
            .map(|(t, s)| (tags[t].id.clone(), s))
            .collect())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.model.name()
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.inner.manifest.epochs_trained
    }
}

/// Trains from a JSON config and returns the saved model.
#[pyfunction]
#[pyo3(signature = (config_json, data, out, baseline=None))]
fn train(config_json: &str, data: PathBuf, out: PathBuf, baseline: Option<&str>) -> PyResult<Model> {
    let cfg = TrainConfig::from_json(config_json).map_err(py_err)?;
    let mode = match baseline {
        None => None,
        Some("item-only") => Some(BaselineMode::ItemOnly),
        Some("item-plus-queries") => Some(BaselineMode::ItemPlusQueries),
        Some(other) => return Err(PyValueError::new_err(format!("unknown baseline '{other}'"))),
    };
    train_to_dir(&cfg, &data, &out, mode).map_err(py_err)?;
    Model::load(out, Some(data))
}

/// Max relative gradient error on the fixed tiny instance.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn gradcheck(seed: u64) -> PyResult<f64> {
    let case = taggnn::diagnostics::GradCheckCase {
        seed,
        ..Default::default()
    };
    taggnn::diagnostics::model_gradient_check(&case).map_err(py_err)
}

#[pyfunction]
fn precision_at_k(predicted: Vec<usize>, truth: Vec<usize>, k: usize) -> PyResult<f64> {
    taggnn::eval::precision_at_k(&predicted, &truth, k).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (scores, k, exclude=vec![]))]
fn predict_topk(scores: Vec<f64>, k: usize, exclude: Vec<usize>) -> PyResult<Vec<usize>> {
    taggnn::eval::predict_topk(&scores, k, &exclude).map_err(py_err)
}

/// Writes a synthetic dataset ("default", "overfit", "cold_start",
/// "query_signal" or "completion") as TSV files into `out`.
#[pyfunction]
#[pyo3(signature = (out, scenario="default", seed=0, n_items=None))]
fn generate_synthetic(out: PathBuf, scenario: &str, seed: u64, n_items: Option<usize>) -> PyResult<()> {
    let mut cfg = match scenario {
        "default" => SyntheticConfig {
            seed,
            ..Default::default()
        },
        "overfit" => SyntheticConfig::overfit(seed),
        "cold_start" => SyntheticConfig::cold_start(seed),
        "query_signal" => SyntheticConfig::query_signal(seed),
        "completion" => SyntheticConfig::completion(seed),
        other => return Err(PyValueError::new_err(format!("unknown scenario '{other}'"))),
    };
    if let Some(n) = n_items {
        cfg.n_items = n;
    }
    generate(&cfg).and_then(|d| d.dataset.save(&out)).map_err(py_err)
}

#[pymodule]
fn pytaggnn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(precision_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(predict_topk, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    Ok(())
}
