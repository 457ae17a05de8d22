use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{precision_at_k, predict_topk};
use crate::data::{Role, TaggingTask};
use crate::error::{Error, Result};
use crate::graph::TripartiteGraph;
use crate::model::TagGnnModel;

/// Anything that assigns a score to every tag for a given item.
pub trait TagScorer {
    /// One score vector of length `n_tags` per requested item.
    fn score_items(&self, graph: &TripartiteGraph, items: &[usize]) -> Result<Vec<Vec<f64>>>;
}

impl TagScorer for TagGnnModel {
    fn score_items(&self, graph: &TripartiteGraph, items: &[usize]) -> Result<Vec<Vec<f64>>> {
        TagGnnModel::score_items(self, graph, items)
    }
}

/// Which half of the held-out items to score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Validation,
    Test,
}

impl EvalSplit {
    /// `(full prediction, completion)` roles.
    pub fn roles(self) -> (Role, Role) {
        match self {
            EvalSplit::Validation => (Role::ValFull, Role::ValComp),
            EvalSplit::Test => (Role::TestFull, Role::TestComp),
        }
    }
}

/// Macro-averaged precision for one item subset. `p@k` is `null` when the
/// subset is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    #[serde(flatten)]
    pub precision: BTreeMap<String, Option<f64>>,
    pub items: usize,
}

impl SubsetReport {
    pub fn at(&self, k: usize) -> Option<f64> {
        self.precision.get(&format!("p@{k}")).copied().flatten()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub model: String,
    pub split: EvalSplit,
    pub config_hash: String,
    pub seed: u64,
    pub epochs: usize,
}

/// Precision@K for full prediction (`without_tags`) and completion
/// (`partial_tags`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub without_tags: SubsetReport,
    pub partial_tags: SubsetReport,
    pub meta: ReportMeta,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Scores every item of `role` on `graph` and averages P@K. Completion
/// items never see their known tags as candidates; their truth is the
/// held-out pair. Items without any ground-truth tag are skipped.
pub fn subset_precision(
    scorer: &dyn TagScorer,
    graph: &TripartiteGraph,
    task: &TaggingTask,
    role: Role,
    ks: &[usize],
) -> Result<SubsetReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::invalid("K values must be positive"));
    }
    let items: Vec<usize> = task
        .items_with_role(role)
        .into_iter()
        .filter(|&i| !task.labels(i).is_empty())
        .collect();
    let mut sums = vec![0.0; ks.len()];
    if !items.is_empty() {
        let kmax = *ks.iter().max().unwrap_or(&1);
        let scores = scorer.score_items(graph, &items)?;
        for (&i, s) in items.iter().zip(&scores) {
            let exclude = if role.is_completion() {
                task.known_tags(i)
            } else {
                Vec::new()
            };
            let top = predict_topk(s, kmax, &exclude)?;
            let truth = task.labels(i);
            for (sum, &k) in sums.iter_mut().zip(ks) {
                *sum += precision_at_k(&top, &truth, k)?;
            }
        }
    }
    let n = items.len();
    let precision = ks
        .iter()
        .zip(sums)
        .map(|(k, s)| (format!("p@{k}"), (n > 0).then(|| s / n as f64)))
        .collect();
    Ok(SubsetReport { precision, items: n })
}

/// Full report for one split. `graph` overrides the task graph, e.g. to
/// evaluate with completion items' known tags removed.
pub fn evaluate(
    scorer: &dyn TagScorer,
    task: &TaggingTask,
    graph: Option<&TripartiteGraph>,
    ks: &[usize],
    meta: ReportMeta,
) -> Result<EvalReport> {
    let graph = graph.unwrap_or(&task.graph);
    let (full, comp) = meta.split.roles();
    Ok(EvalReport {
        without_tags: subset_precision(scorer, graph, task, full, ks)?,
        partial_tags: subset_precision(scorer, graph, task, comp, ks)?,
        meta,
    })
}
