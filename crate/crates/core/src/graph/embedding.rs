use rand::Rng;

use super::tripartite::{NodeRef, NodeType, TripartiteGraph};
use super::vocab::UNK_ID;
use crate::autodiff::Tensor;

/// Word and tag-id embeddings that produce initial node representations.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    /// `V × d`, row per vocabulary id.
    pub words: Tensor,
    /// `T × d`, row per tag; `None` disables the id term.
    pub tag_ids: Option<Tensor>,
    /// Whether tag names contribute their averaged word embeddings.
    pub tag_names: bool,
}

/// Uniform(−0.05, 0.05) initialization used for every embedding table.
pub fn uniform_embedding(rows: usize, dim: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(rows, dim, |_, _| rng.random_range(-0.05..0.05))
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.words.cols()
    }
}

/// Mean of the node's in-vocabulary word embeddings; for tags, plus the
/// tag's id embedding. Nodes without usable tokens fall back to the id
/// embedding (tags) or the zero vector (queries and items).
pub fn initial_node_representation(
    node: NodeRef,
    graph: &TripartiteGraph,
    table: &EmbeddingTable,
) -> Vec<f64> {
    let d = table.dim();
    let mut h = vec![0.0; d];
    let use_words = node.node_type != NodeType::Tag || table.tag_names;
    if use_words {
        let ids: Vec<usize> = graph
            .tokens(node)
            .iter()
            .copied()
            .filter(|&t| t != UNK_ID)
            .collect();
        if !ids.is_empty() {
            let inv = 1.0 / ids.len() as f64;
            for &t in &ids {
                for (x, w) in h.iter_mut().zip(table.words.row(t)) {
                    *x += w * inv;
                }
            }
        }
    }
    if node.node_type == NodeType::Tag {
        if let Some(ids) = &table.tag_ids {
            for (x, e) in h.iter_mut().zip(ids.row(node.index)) {
                *x += e;
            }
        }
    }
    h
}
