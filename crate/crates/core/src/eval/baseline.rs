use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::report::TagScorer;
use crate::autodiff::{Tape, Tensor};
use crate::data::{Role, TaggingTask};
use crate::error::{Error, Result};
use crate::graph::{uniform_embedding, NodeRef, TripartiteGraph, UNK_ID};
use crate::model::ParamStore;
use crate::training::{
    fit, label_matrix, node_classification_loss, validation_scores, FitOptions, StepOutcome, TrainConfig,
    TrainLog, Trainable,
};

/// Queries concatenated to an item's title in [`BaselineMode::ItemPlusQueries`].
pub const TOP_QUERIES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Title words only.
    ItemOnly,
    /// Title plus the words of the item's heaviest queries.
    ItemPlusQueries,
}

/// Averaged word embeddings followed by a linear classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel {
    mode: BaselineMode,
    params: ParamStore,
}

impl Trainable for BaselineModel {
    fn param_store(&self) -> &ParamStore {
        &self.params
    }
    fn param_store_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

/// Token ids of an item's document: title, then the queries with the
/// largest interaction weight (ties by query index) in QI mode.
pub fn item_document(graph: &TripartiteGraph, item: usize, mode: BaselineMode) -> Vec<usize> {
    let mut doc: Vec<usize> = graph.tokens(NodeRef::item(item)).to_vec();
    if mode == BaselineMode::ItemPlusQueries {
        let mut queries = graph.item_queries(item);
        queries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (q, _) in queries.into_iter().take(TOP_QUERIES) {
            doc.extend_from_slice(graph.tokens(NodeRef::query(q)));
        }
    }
    doc.retain(|&t| t != UNK_ID);
    doc
}

impl BaselineModel {
    pub fn new(mode: BaselineMode, vocab_size: usize, n_tags: usize, dim: usize, seed: u64) -> Result<Self> {
        if vocab_size == 0 || n_tags == 0 || dim == 0 {
            return Err(Error::invalid("baseline dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        params.push("word_embeddings", uniform_embedding(vocab_size, dim, &mut rng));
        let limit = (6.0 / (dim + n_tags) as f64).sqrt();
        params.push(
            "head.w",
            Tensor::from_fn(dim, n_tags, |_, _| rand::Rng::random_range(&mut rng, -limit..limit)),
        );
        params.push("head.q", Tensor::zeros(&[n_tags]));
        Ok(Self { mode, params })
    }

    /// Rebuilds a model from `word_embeddings` (V×d), `head.w` (d×N) and `head.q` (N).
    pub fn from_params(mode: BaselineMode, params: ParamStore) -> Result<Self> {
        if params.names() != ["word_embeddings", "head.w", "head.q"] {
            return Err(Error::invalid("parameter names do not match the baseline layout"));
        }
        let (words, w, q) = (params.get(0), params.get(1), params.get(2));
        if words.shape().len() != 2 || w.shape() != [words.cols(), q.len()] || q.shape().len() != 1 {
            return Err(Error::shape(format!(
                "baseline parameters {:?}, {:?}, {:?}",
                words.shape(),
                w.shape(),
                q.shape()
            )));
        }
        Ok(Self { mode, params })
    }

    pub fn mode(&self) -> BaselineMode {
        self.mode
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    fn dim(&self) -> usize {
        self.params.get(0).cols()
    }

    /// Document embeddings of `items` on a fresh tape, plus the head.
    fn record(&self, graph: &TripartiteGraph, items: &[usize]) -> Result<(Tape, Vec<crate::autodiff::Var>, crate::autodiff::Var)> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let mut scale = Vec::new();
        for (r, &i) in items.iter().enumerate() {
            let doc = item_document(graph, i, self.mode);
            let inv = 1.0 / doc.len().max(1) as f64;
            for t in doc {
                ids.push(t);
                rows.push(r);
                scale.push(inv);
            }
        }
        let docs = if ids.is_empty() {
            tape.leaf(Tensor::zeros(&[items.len(), self.dim()]))
        } else {
            let gathered = tape.gather_rows(vars[0], &ids)?;
            let s = tape.leaf(Tensor::vector(scale)?);
            let scaled = tape.scale_rows(gathered, s)?;
            tape.scatter_add_rows(scaled, &rows, items.len())?
        };
        Ok((tape, vars, docs))
    }
}

impl TagScorer for BaselineModel {
    fn score_items(&self, graph: &TripartiteGraph, items: &[usize]) -> Result<Vec<Vec<f64>>> {
        let words = self.params.get(0);
        let (w, q) = (self.params.get(1), self.params.get(2));
        let (d, n) = (self.dim(), q.len());
        if graph.n_tags() != n {
            return Err(Error::invalid(format!("graph has {} tags, baseline expects {n}", graph.n_tags())));
        }
        items
            .iter()
            .map(|&i| {
                let doc = item_document(graph, i, self.mode);
                let mut h = vec![0.0; d];
                for &t in &doc {
                    if t >= words.rows() {
                        return Err(Error::invalid(format!("token id {t} outside vocabulary")));
                    }
                    for (x, e) in h.iter_mut().zip(words.row(t)) {
                        *x += e;
                    }
                }
                let inv = 1.0 / doc.len().max(1) as f64;
                h.iter_mut().for_each(|x| *x *= inv);
                Ok((0..n)
                    .map(|t| h.iter().enumerate().fold(q.data()[t], |acc, (k, x)| acc + x * w.get(k, t)))
                    .collect())
            })
            .collect()
    }
}

/// Trains a baseline on the training items of `task` with the optimizer
/// and stopping settings of `config`.
pub fn train_baseline(task: &TaggingTask, mode: BaselineMode, config: &TrainConfig) -> Result<(BaselineModel, TrainLog)> {
    config.validate()?;
    let graph = &task.graph;
    let mut model = BaselineModel::new(mode, task.vocab.len(), graph.n_tags(), config.dim, config.seed)?;
    let items = task.items_with_role(Role::Train);
    let labels = label_matrix(&task.item_tags, &items, graph.n_tags())?;
    let step = |m: &BaselineModel| -> Result<StepOutcome> {
        let (mut tape, vars, docs) = m.record(graph, &items)?;
        let loss = node_classification_loss(&mut tape, docs, Some((vars[1], vars[2])), &labels)?;
        let grads = tape.backward(loss)?;
        let value = tape.value(loss).data()[0];
        Ok(StepOutcome {
            l1: value,
            l2: 0.0,
            combined: value,
            grads: vars.iter().map(|&v| grads.wrt(v)).collect(),
        })
    };
    let opts = FitOptions {
        learning_rate: config.learning_rate,
        max_epochs: config.max_epochs,
        patience: config.patience,
        min_epochs: config.min_epochs,
    };
    let log = fit(&mut model, opts, step, |m| validation_scores(m, task))?;
    Ok((model, log))
}
