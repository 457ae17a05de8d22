//! Tripartite query–item–tag graph, vocabularies and initial node features.

mod embedding;
mod tripartite;
mod vocab;

pub use embedding::{initial_node_representation, uniform_embedding, EmbeddingTable};
pub use tripartite::{
    standardize, standardize_edge_weights, EdgeFeatures, Neighbor, NodeRef, NodeType,
    QueryItemEdge, TripartiteGraph,
};
pub use vocab::{tokenize_and_index, Vocabulary, UNK_ID, UNK_TOKEN};
