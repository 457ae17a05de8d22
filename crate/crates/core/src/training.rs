//! Losses, training configuration and the full-batch training loop.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Adam, Tape, Tensor, Var};
use crate::data::{Role, SplitCounts, TaggingTask};
use crate::error::{Error, Result};
use crate::eval::{subset_precision, TagScorer};
use crate::graph::NodeType;
use crate::model::{ForwardPass, ModelDims, ParamStore, TagGnnModel};
use crate::propagation::{ModelVariant, PropagationPlan, VariantKind};

/// Every knob of a training run. Also the JSON config format; unknown
/// keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout: f64,
    pub dim: usize,
    pub n_layers: usize,
    pub gamma: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Early stopping cannot trigger before this epoch.
    pub min_epochs: usize,
    pub seed: u64,
    pub variant: VariantKind,
    pub heterogeneous: bool,
    pub tag_name_embeddings: bool,
    pub tag_id_embeddings: bool,
    pub gated: bool,
    /// Vocabulary min-count applied when the task is built.
    pub min_count: usize,
    /// Split sizes used by the `train` command when no splits file exists.
    pub splits: Option<SplitCounts>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            dropout: 0.5,
            dim: 200,
            n_layers: 2,
            gamma: 1.0,
            max_epochs: 200,
            patience: 5,
            min_epochs: 0,
            seed: 0,
            variant: VariantKind::Full,
            heterogeneous: true,
            tag_name_embeddings: true,
            tag_id_embeddings: true,
            gated: true,
            min_count: 1,
            splits: None,
        }
    }
}

impl TrainConfig {
    pub fn model_variant(&self) -> ModelVariant {
        ModelVariant {
            kind: self.variant,
            heterogeneous: self.heterogeneous,
            tag_name_embeddings: self.tag_name_embeddings,
            tag_id_embeddings: self.tag_id_embeddings,
            gated: self.gated,
            n_layers: self.n_layers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("config: {what}")));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("gamma must be non-negative");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.min_count == 0 {
            return bad("min_count must be positive");
        }
        self.model_variant().validate()
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn check_labels(items: Var, labels: &Tensor, tape: &Tape) -> Result<()> {
    let rows = tape.value(items).rows();
    if labels.shape().len() != 2 || labels.rows() != rows {
        return Err(Error::shape(format!(
            "label matrix {:?} for {rows} items",
            labels.shape()
        )));
    }
    Ok(())
}

/// Mean BCE of `items · tagsᵀ` against a 0/1 label matrix.
pub fn link_prediction_loss(tape: &mut Tape, items: Var, tags: Var, labels: &Tensor) -> Result<Var> {
    check_labels(items, labels, tape)?;
    let logits = tape.matmul_t(items, tags)?;
    tape.bce_with_logits(logits, labels.clone())
}

/// Mean BCE of `items · W + q` against a 0/1 label matrix.
pub fn node_classification_loss(
    tape: &mut Tape,
    items: Var,
    head: Option<(Var, Var)>,
    labels: &Tensor,
) -> Result<Var> {
    let (w, q) = head.ok_or_else(|| Error::invalid("node classification needs a classification head"))?;
    check_labels(items, labels, tape)?;
    let logits = tape.matmul(items, w)?;
    let logits = tape.add_row(logits, q)?;
    tape.bce_with_logits(logits, labels.clone())
}

/// Loss nodes recorded on a forward pass.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    /// Primary loss on propagated item representations.
    pub primary: Var,
    /// Dual loss on initial item representations.
    pub dual: Var,
    /// `primary + γ·dual`; the primary node itself when γ = 0.
    pub combined: Var,
}

/// Builds `L1 + γ·L2` for `items` on an existing forward pass.
pub fn combined_loss(
    pass: &mut ForwardPass,
    item_offset: usize,
    tag_offset: usize,
    n_tags: usize,
    items: &[usize],
    labels: &Tensor,
    gamma: f64,
) -> Result<LossTerms> {
    if items.is_empty() {
        return Err(Error::invalid("loss over zero items"));
    }
    let rows: Vec<usize> = items.iter().map(|i| item_offset + i).collect();
    let tape = &mut pass.tape;
    let final_items = tape.gather_rows(pass.output, &rows)?;
    let initial_items = tape.gather_rows(pass.initial, &rows)?;
    let (primary, dual) = match pass.head {
        Some(_) => (
            node_classification_loss(tape, final_items, pass.head, labels)?,
            node_classification_loss(tape, initial_items, pass.head, labels)?,
        ),
        None => {
            let tag_rows: Vec<usize> = (tag_offset..tag_offset + n_tags).collect();
            let tags = tape.gather_rows(pass.output, &tag_rows)?;
            (
                link_prediction_loss(tape, final_items, tags, labels)?,
                link_prediction_loss(tape, initial_items, tags, labels)?,
            )
        }
    };
    let combined = if gamma == 0.0 {
        primary
    } else {
        let scaled = tape.scale(dual, gamma);
        tape.add(primary, scaled)?
    };
    Ok(LossTerms {
        primary,
        dual,
        combined,
    })
}

/// Row-per-item 0/1 label matrix.
pub fn label_matrix(item_tags: &[Vec<usize>], items: &[usize], n_tags: usize) -> Result<Tensor> {
    if items.is_empty() {
        return Err(Error::invalid("label matrix over zero items"));
    }
    let mut labels = Tensor::zeros(&[items.len(), n_tags]);
    for (r, &i) in items.iter().enumerate() {
        for &t in &item_tags[i] {
            labels.data_mut()[r * n_tags + t] = 1.0;
        }
    }
    Ok(labels)
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l1: f64,
    pub l2: f64,
    pub combined: f64,
    pub val_full_p1: Option<f64>,
    pub val_comp_p1: Option<f64>,
    pub seconds: f64,
}

impl EpochRecord {
    /// Mean P@1 over the non-empty validation subsets.
    pub fn val_p1(&self) -> Option<f64> {
        match (self.val_full_p1, self.val_comp_p1) {
            (Some(a), Some(b)) => Some((a + b) / 2.0),
            (a, b) => a.or(b),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainLog {
    /// JSON-lines rendering, one epoch per line.
    pub fn to_lines(&self) -> String {
        self.epochs
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn combined_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.combined).collect()
    }
}

/// Validation P@1 per subset.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ValScores {
    pub full: Option<f64>,
    pub comp: Option<f64>,
}

/// Losses from one optimization step, already differentiated.
pub struct StepOutcome {
    pub l1: f64,
    pub l2: f64,
    pub combined: f64,
    pub grads: Vec<Tensor>,
}

/// Optimizer and stopping settings shared by every trainable model.
#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_epochs: usize,
}

/// Models whose parameters live in a [`ParamStore`].
pub trait Trainable {
    fn param_store(&self) -> &ParamStore;
    fn param_store_mut(&mut self) -> &mut ParamStore;
}

impl Trainable for TagGnnModel {
    fn param_store(&self) -> &ParamStore {
        self.params()
    }
    fn param_store_mut(&mut self) -> &mut ParamStore {
        self.params_mut()
    }
}

/// Full-batch Adam loop with early stopping on mean validation P@1.
///
/// Stops once `patience` consecutive epochs fail to strictly improve the
/// best score, but never before `min_epochs`. Without validation scores,
/// runs every epoch and keeps the last parameters.
pub fn fit<M: Trainable>(
    model: &mut M,
    opts: FitOptions,
    mut step: impl FnMut(&M) -> Result<StepOutcome>,
    mut validate: impl FnMut(&M) -> Result<ValScores>,
) -> Result<TrainLog> {
    let mut adam = Adam::new(opts.learning_rate);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut waited = 0;
    for epoch in 1..=opts.max_epochs {
        let start = Instant::now();
        let out = step(model)?;
        for (name, v) in [("L1", out.l1), ("L2", out.l2), ("loss", out.combined)] {
            if !v.is_finite() {
                return Err(Error::Numerical(format!("epoch {epoch}: {name} is {v}")));
            }
        }
        adam.step(model.param_store_mut().tensors_mut(), &out.grads)?;
        if !model.param_store().is_finite() {
            return Err(Error::Numerical(format!("epoch {epoch}: parameters became non-finite")));
        }
        let val = validate(model)?;
        let record = EpochRecord {
            epoch,
            l1: out.l1,
            l2: out.l2,
            combined: out.combined,
            val_full_p1: val.full,
            val_comp_p1: val.comp,
            seconds: start.elapsed().as_secs_f64(),
        };
        let score = record.val_p1();
        log.epochs.push(record);
        let Some(score) = score else {
            log.best_epoch = epoch;
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.param_store().clone()));
            log.best_epoch = epoch;
            waited = 0;
        } else {
            waited += 1;
            if waited >= opts.patience && epoch >= opts.min_epochs {
                log.stopped_early = true;
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        *model.param_store_mut() = params;
    }
    Ok(log)
}

/// Mean P@1 of `scorer` on the validation subsets of `task`.
pub fn validation_scores(scorer: &dyn TagScorer, task: &TaggingTask) -> Result<ValScores> {
    let full = subset_precision(scorer, &task.graph, task, Role::ValFull, &[1])?;
    let comp = subset_precision(scorer, &task.graph, task, Role::ValComp, &[1])?;
    Ok(ValScores {
        full: full.at(1),
        comp: comp.at(1),
    })
}

/// Trains a fresh model on the training items of `task`.
pub fn train(task: &TaggingTask, config: &TrainConfig) -> Result<(TagGnnModel, TrainLog)> {
    config.validate()?;
    let graph = &task.graph;
    let dims = ModelDims {
        vocab_size: task.vocab.len(),
        n_tags: graph.n_tags(),
        dim: config.dim,
        edge_feature_dim: graph.edge_features().map_or(0, |f| f.dim),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = TagGnnModel::new(config.model_variant(), dims, &mut rng)?;
    let items = task.items_with_role(Role::Train);
    if items.is_empty() {
        return Err(Error::invalid("no training items"));
    }
    let labels = label_matrix(&task.item_tags, &items, graph.n_tags())?;
    let plan = PropagationPlan::new(graph, config.variant);
    let (item_off, tag_off) = (graph.offset(NodeType::Item), graph.offset(NodeType::Tag));

    let step = |m: &TagGnnModel| -> Result<StepOutcome> {
        let mut pass = m.forward(graph, &plan, Some((config.dropout, &mut rng)))?;
        let loss = combined_loss(&mut pass, item_off, tag_off, graph.n_tags(), &items, &labels, config.gamma)?;
        let grads = pass.tape.backward(loss.combined)?;
        let value = |v: Var| pass.tape.value(v).data()[0];
        Ok(StepOutcome {
            l1: value(loss.primary),
            l2: value(loss.dual),
            combined: value(loss.combined),
            grads: pass.params.iter().map(|&p| grads.wrt(p)).collect(),
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
