//! Finite-difference check of the complete model and loss.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::finite_difference_check;
use crate::data::{Entity, RawDataset, Role, SplitAssignment, TaggingTask};
use crate::error::Result;
use crate::graph::NodeType;
use crate::model::{ModelDims, TagGnnModel};
use crate::propagation::{ModelVariant, PropagationPlan, VariantKind};
use crate::training::{combined_loss, label_matrix};

/// Size and architecture of one gradient-check instance.
#[derive(Clone, Debug)]
pub struct GradCheckCase {
    pub n_queries: usize,
    pub n_items: usize,
    pub n_tags: usize,
    pub dim: usize,
    pub variant: ModelVariant,
    pub gamma: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for GradCheckCase {
    fn default() -> Self {
        Self {
            n_queries: 3,
            n_items: 4,
            n_tags: 5,
            dim: 6,
            variant: ModelVariant::new(VariantKind::Full),
            gamma: 1.0,
            eps: 1e-5,
            seed: 0,
        }
    }
}

/// Random dataset with every item in the training role. Each item gets
/// 1 to 3 tags and each query 1 to 3 items with weights in [1, 5].
pub fn random_task(n_queries: usize, n_items: usize, n_tags: usize, seed: u64) -> Result<TaggingTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = ["red", "blue", "green", "fast", "slow", "big", "small", "shoe", "bag"];
    let text = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(1..=3);
        (0..n).map(|_| *words.choose(rng).expect("words")).collect::<Vec<_>>().join(" ")
    };
    let items = (0..n_items).map(|i| Entity::new(format!("i{i}"), text(&mut rng))).collect();
    let queries = (0..n_queries).map(|q| Entity::new(format!("q{q}"), text(&mut rng))).collect();
    let tags = (0..n_tags).map(|t| Entity::new(format!("t{t}"), text(&mut rng))).collect();
    let mut item_tag = Vec::new();
    for i in 0..n_items {
        let mut all: Vec<usize> = (0..n_tags).collect();
        let k = rng.random_range(1..=3.min(n_tags));
        for _ in 0..k {
            let j = rng.random_range(0..all.len());
            item_tag.push((i, all.swap_remove(j)));
        }
    }
    let mut query_item = Vec::new();
    for q in 0..n_queries {
        let mut all: Vec<usize> = (0..n_items).collect();
        let k = rng.random_range(1..=3.min(n_items));
        for _ in 0..k {
            let j = rng.random_range(0..all.len());
            query_item.push((q, all.swap_remove(j), rng.random_range(1.0..=5.0)));
        }
    }
    let ds = RawDataset {
        items,
        queries,
        tags,
        query_item,
        item_tag,
    };
    let splits = SplitAssignment::new(vec![Role::Train; n_items], Default::default(), &ds.item_tag_sets())?;
    TaggingTask::new(ds, splits, 1)
}

/// Max relative error between analytic and central-difference gradients
/// of `L1 + γ·L2` over every parameter, dropout off.
pub fn model_gradient_check(case: &GradCheckCase) -> Result<f64> {
    let task = random_task(case.n_queries, case.n_items, case.n_tags, case.seed)?;
    let graph = &task.graph;
    let dims = ModelDims {
        vocab_size: task.vocab.len(),
        n_tags: graph.n_tags(),
        dim: case.dim,
        edge_feature_dim: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(case.seed ^ 0x9e37_79b9);
    let model = TagGnnModel::new(case.variant.clone(), dims, &mut rng)?;
    let plan = PropagationPlan::new(graph, case.variant.kind);
    let items: Vec<usize> = (0..graph.n_items()).collect();
    let labels = label_matrix(&task.item_tags, &items, graph.n_tags())?;
    let (io, to) = (graph.offset(NodeType::Item), graph.offset(NodeType::Tag));

    let mut pass = model.forward(graph, &plan, None)?;
    let loss = combined_loss(&mut pass, io, to, graph.n_tags(), &items, &labels, case.gamma)?;
    let grads = pass.tape.backward(loss.combined)?;
    let analytic: Vec<_> = pass.params.iter().map(|&p| grads.wrt(p)).collect();

    finite_difference_check(model.params().tensors(), &analytic, case.eps, |params| {
        let mut m = model.clone();
        m.params_mut().tensors_mut().clone_from_slice(params);
        let mut pass = m.forward(graph, &plan, None)?;
        let loss = combined_loss(&mut pass, io, to, graph.n_tags(), &items, &labels, case.gamma)?;
        Ok(pass.tape.value(loss.combined).data()[0])
    })
}
