use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::softplus;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    Query,
    Item,
    Tag,
}

impl NodeType {
    pub const ALL: [NodeType; 3] = [NodeType::Query, NodeType::Item, NodeType::Tag];

    pub fn slot(self) -> usize {
        match self {
            NodeType::Query => 0,
            NodeType::Item => 1,
            NodeType::Tag => 2,
        }
    }
}

/// A node addressed by type and its index within that type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeRef {
    pub node_type: NodeType,
    pub index: usize,
}

impl NodeRef {
    pub fn query(index: usize) -> Self {
        Self {
            node_type: NodeType::Query,
            index,
        }
    }

    pub fn item(index: usize) -> Self {
        Self {
            node_type: NodeType::Item,
            index,
        }
    }

    pub fn tag(index: usize) -> Self {
        Self {
            node_type: NodeType::Tag,
            index,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryItemEdge {
    pub query: usize,
    pub item: usize,
    /// Raw interaction weight after merging duplicates.
    pub weight: f64,
}

/// One entry of a node's adjacency list.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    /// Global node index (queries, then items, then tags).
    pub node: usize,
    /// Scalar message multiplier: normalized weight for query–item edges,
    /// exactly 1 for item–tag edges.
    pub weight: f64,
    /// Position in [`TripartiteGraph::query_item_edges`] for query–item edges.
    pub qi_edge: Option<usize>,
}

/// Undirected query–item–tag graph.
///
/// Nodes are numbered globally with queries first, then items, then tags.
/// Adjacency lists are sorted by global neighbor index.
#[derive(Clone, Debug, PartialEq)]
pub struct TripartiteGraph {
    query_tokens: Vec<Vec<usize>>,
    item_tokens: Vec<Vec<usize>>,
    tag_tokens: Vec<Vec<usize>>,
    qi_edges: Vec<QueryItemEdge>,
    it_edges: Vec<(usize, usize)>,
    qi_multipliers: Vec<f64>,
    edge_features: Option<EdgeFeatures>,
    adjacency: Vec<Vec<Neighbor>>,
}

/// Vector features for query–item edges. Item–tag edges use zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeFeatures {
    pub dim: usize,
    /// Row per query–item edge, `dim` values each.
    pub values: Vec<f64>,
}

/// `(w − μ) / σ` with population σ; all zeros when σ = 0.
pub fn standardize(raw: &[f64]) -> Vec<f64> {
    if raw.is_empty() {
        return Vec::new();
    }
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let var = raw.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|w| (w - mean) / sd).collect()
}

/// Standardizes raw query–item weights, then maps them through softplus so
/// every message multiplier is positive and order is preserved.
pub fn standardize_edge_weights(raw: &[f64]) -> Vec<f64> {
    standardize(raw).into_iter().map(softplus).collect()
}

impl TripartiteGraph {
    /// Builds the graph from per-node token ids and edge lists.
    ///
    /// Duplicate query–item edges are merged with weights summed; duplicate
    /// item–tag edges collapse to one.
    pub fn build(
        query_tokens: Vec<Vec<usize>>,
        item_tokens: Vec<Vec<usize>>,
        tag_tokens: Vec<Vec<usize>>,
        qi_edges: &[(usize, usize, f64)],
        it_edges: &[(usize, usize)],
    ) -> Result<Self> {
        let (nq, ni, nt) = (query_tokens.len(), item_tokens.len(), tag_tokens.len());
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (k, &(q, i, w)) in qi_edges.iter().enumerate() {
            let bad = if q >= nq {
                Some(format!("unknown query {q}"))
            } else if i >= ni {
                Some(format!("unknown item {i}"))
            } else if !(w.is_finite() && w >= 0.0) {
                Some(format!("invalid weight {w}"))
            } else {
                None
            };
            if let Some(message) = bad {
                return Err(Error::Parse {
                    file: "query_item_edges".into(),
                    line: k + 1,
                    message,
                });
            }
            *merged.entry((q, i)).or_default() += w;
        }
        let mut tags = Vec::with_capacity(it_edges.len());
        for (k, &(i, t)) in it_edges.iter().enumerate() {
            let bad = if i >= ni {
                Some(format!("unknown item {i}"))
            } else if t >= nt {
                Some(format!("unknown tag {t}"))
            } else {
                None
            };
            if let Some(message) = bad {
                return Err(Error::Parse {
                    file: "item_tag_edges".into(),
                    line: k + 1,
                    message,
                });
            }
            tags.push((i, t));
        }
        tags.sort_unstable();
        tags.dedup();

        let qi: Vec<QueryItemEdge> = merged
            .into_iter()
            .map(|((query, item), weight)| QueryItemEdge {
                query,
                item,
                weight,
            })
            .collect();
        let mut graph = Self {
            query_tokens,
            item_tokens,
            tag_tokens,
            qi_edges: qi,
            it_edges: tags,
            qi_multipliers: Vec::new(),
            edge_features: None,
            adjacency: Vec::new(),
        };
        graph.finish();
        Ok(graph)
    }

    fn finish(&mut self) {
        let raw: Vec<f64> = self.qi_edges.iter().map(|e| e.weight).collect();
        self.qi_multipliers = standardize_edge_weights(&raw);
        let mut adj: Vec<Vec<Neighbor>> = vec![Vec::new(); self.n_nodes()];
        for (k, e) in self.qi_edges.iter().enumerate() {
            let (q, i) = (self.global(NodeRef::query(e.query)), self.global(NodeRef::item(e.item)));
            let w = self.qi_multipliers[k];
            adj[q].push(Neighbor {
                node: i,
                weight: w,
                qi_edge: Some(k),
            });
            adj[i].push(Neighbor {
                node: q,
                weight: w,
                qi_edge: Some(k),
            });
        }
        for &(item, tag) in &self.it_edges {
            let (i, t) = (self.global(NodeRef::item(item)), self.global(NodeRef::tag(tag)));
            adj[i].push(Neighbor {
                node: t,
                weight: 1.0,
                qi_edge: None,
            });
            adj[t].push(Neighbor {
                node: i,
                weight: 1.0,
                qi_edge: None,
            });
        }
        for list in &mut adj {
            list.sort_by_key(|n| n.node);
        }
        self.adjacency = adj;
    }

    /// Attaches vector features to every query–item edge.
    pub fn with_edge_features(
        mut self,
        dim: usize,
        mut features: impl FnMut(&QueryItemEdge) -> Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("edge feature dimension must be >= 1"));
        }
        let mut values = Vec::with_capacity(dim * self.qi_edges.len());
        for e in &self.qi_edges {
            let f = features(e);
            if f.len() != dim {
                return Err(Error::shape(format!(
                    "edge ({}, {}) has {} features, expected {dim}",
                    e.query,
                    e.item,
                    f.len()
                )));
            }
            values.extend(f);
        }
        self.edge_features = Some(EdgeFeatures { dim, values });
        Ok(self)
    }

    /// Copy of this graph keeping only the selected edges. Query–item
    /// weights are re-normalized over the surviving edges.
    pub fn filter_edges(
        &self,
        keep_qi: impl Fn(&QueryItemEdge) -> bool,
        keep_it: impl Fn(usize, usize) -> bool,
    ) -> Self {
        let mut kept_features = Vec::new();
        let mut qi_edges = Vec::new();
        for (k, e) in self.qi_edges.iter().enumerate() {
            if keep_qi(e) {
                qi_edges.push(e.clone());
                if let Some(f) = &self.edge_features {
                    kept_features.extend_from_slice(&f.values[k * f.dim..(k + 1) * f.dim]);
                }
            }
        }
        let mut g = Self {
            query_tokens: self.query_tokens.clone(),
            item_tokens: self.item_tokens.clone(),
            tag_tokens: self.tag_tokens.clone(),
            qi_edges,
            it_edges: self
                .it_edges
                .iter()
                .copied()
                .filter(|&(i, t)| keep_it(i, t))
                .collect(),
            qi_multipliers: Vec::new(),
            edge_features: self.edge_features.as_ref().map(|f| EdgeFeatures {
                dim: f.dim,
                values: kept_features,
            }),
            adjacency: Vec::new(),
        };
        g.finish();
        g
    }

    pub fn n_queries(&self) -> usize {
        self.query_tokens.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_tokens.len()
    }

    pub fn n_tags(&self) -> usize {
        self.tag_tokens.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_queries() + self.n_items() + self.n_tags()
    }

    pub fn count(&self, t: NodeType) -> usize {
        match t {
            NodeType::Query => self.n_queries(),
            NodeType::Item => self.n_items(),
            NodeType::Tag => self.n_tags(),
        }
    }

    /// First global index of nodes of type `t`.
    pub fn offset(&self, t: NodeType) -> usize {
        match t {
            NodeType::Query => 0,
            NodeType::Item => self.n_queries(),
            NodeType::Tag => self.n_queries() + self.n_items(),
        }
    }

    pub fn global(&self, node: NodeRef) -> usize {
        self.offset(node.node_type) + node.index
    }

    pub fn node_ref(&self, global: usize) -> NodeRef {
        let (nq, ni) = (self.n_queries(), self.n_items());
        if global < nq {
            NodeRef::query(global)
        } else if global < nq + ni {
            NodeRef::item(global - nq)
        } else {
            NodeRef::tag(global - nq - ni)
        }
    }

    pub fn tokens(&self, node: NodeRef) -> &[usize] {
        match node.node_type {
            NodeType::Query => &self.query_tokens[node.index],
            NodeType::Item => &self.item_tokens[node.index],
            NodeType::Tag => &self.tag_tokens[node.index],
        }
    }

    pub fn neighbors(&self, global: usize) -> &[Neighbor] {
        &self.adjacency[global]
    }

    pub fn degree(&self, global: usize) -> usize {
        self.adjacency[global].len()
    }

    pub fn is_isolated(&self, global: usize) -> bool {
        self.adjacency[global].is_empty()
    }

    pub fn query_item_edges(&self) -> &[QueryItemEdge] {
        &self.qi_edges
    }

    pub fn item_tag_edges(&self) -> &[(usize, usize)] {
        &self.it_edges
    }

    /// Normalized multipliers aligned with [`Self::query_item_edges`].
    pub fn query_item_multipliers(&self) -> &[f64] {
        &self.qi_multipliers
    }

    pub fn edge_features(&self) -> Option<&EdgeFeatures> {
        self.edge_features.as_ref()
    }

    /// Tags linked to `item` in this graph, ascending.
    pub fn item_tags(&self, item: usize) -> Vec<usize> {
        let off = self.offset(NodeType::Tag);
        self.neighbors(self.global(NodeRef::item(item)))
            .iter()
            .filter(|n| n.node >= off)
            .map(|n| n.node - off)
            .collect()
    }

    /// Queries linked to `item` with their raw (merged) weights.
    pub fn item_queries(&self, item: usize) -> Vec<(usize, f64)> {
        self.neighbors(self.global(NodeRef::item(item)))
            .iter()
            .filter_map(|n| n.qi_edge)
            .map(|k| (self.qi_edges[k].query, self.qi_edges[k].weight))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn toks(n: usize) -> Vec<Vec<usize>> {
        vec![Vec::new(); n]
    }

    #[test]
    fn single_path_degrees() {
        let g = TripartiteGraph::build(toks(1), toks(1), toks(1), &[(0, 0, 1.0)], &[(0, 0)])
            .unwrap();
        assert_eq!(g.degree(g.global(NodeRef::item(0))), 2);
        assert_eq!(g.degree(g.global(NodeRef::query(0))), 1);
        assert_eq!(g.degree(g.global(NodeRef::tag(0))), 1);
    }

    #[test]
    fn duplicate_edges_merge() {
        let g = TripartiteGraph::build(
            toks(1),
            toks(1),
            toks(1),
            &[(0, 0, 2.0), (0, 0, 3.5)],
            &[(0, 0), (0, 0)],
        )
        .unwrap();
        assert_eq!(g.query_item_edges().len(), 1);
        assert_eq!(g.query_item_edges()[0].weight, 5.5);
        assert_eq!(g.item_tag_edges().len(), 1);
    }

    #[test]
    fn empty_item_tag_edges_are_valid() {
        let g = TripartiteGraph::build(toks(1), toks(2), toks(1), &[(0, 0, 1.0)], &[]).unwrap();
        assert!(g.item_tags(0).is_empty());
        assert!(g.is_isolated(g.global(NodeRef::item(1))));
    }

    #[test]
    fn dangling_edge_reports_position() {
        let err = TripartiteGraph::build(toks(1), toks(1), toks(1), &[], &[(0, 0), (0, 4)])
            .unwrap_err();
        assert_eq!(err.to_string(), "item_tag_edges:2 unknown tag 4");
        assert!(TripartiteGraph::build(toks(1), toks(1), toks(1), &[(0, 0, -1.0)], &[]).is_err());
    }

    #[test]
    fn standardize_examples() {
        let s = standardize(&[1.0, 2.0, 3.0]);
        // μ = 2, σ = sqrt(2/3); (3 − 2)/σ = sqrt(3/2) = 1.224744871391589
        assert_abs_diff_eq!(s[0], -1.224_744_871_391_589, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[2], 1.224_744_871_391_589, epsilon = 1e-12);
        for w in standardize_edge_weights(&[4.0, 4.0, 4.0]) {
            assert_abs_diff_eq!(w, std::f64::consts::LN_2, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(
            standardize_edge_weights(&[5.0])[0],
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn filter_keeps_features_aligned() {
        let g = TripartiteGraph::build(toks(2), toks(1), toks(1), &[(0, 0, 1.0), (1, 0, 2.0)], &[])
            .unwrap()
            .with_edge_features(2, |e| vec![e.weight, -e.weight])
            .unwrap();
        let f = g.filter_edges(|e| e.query == 1, |_, _| true);
        assert_eq!(f.edge_features().unwrap().values, vec![2.0, -2.0]);
    }

    fn arb_graph() -> impl Strategy<Value = TripartiteGraph> {
        (1usize..5, 1usize..6, 1usize..5).prop_flat_map(|(nq, ni, nt)| {
            (
                prop::collection::vec((0..nq, 0..ni, 0.0f64..10.0), 0..12),
                prop::collection::vec((0..ni, 0..nt), 0..12),
            )
                .prop_map(move |(qi, it)| {
                    TripartiteGraph::build(toks(nq), toks(ni), toks(nt), &qi, &it).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn adjacency_is_symmetric(g in arb_graph()) {
            for v in 0..g.n_nodes() {
                for n in g.neighbors(v) {
                    prop_assert!(g.neighbors(n.node).iter().any(|m| m.node == v));
                }
                let nodes: Vec<usize> = g.neighbors(v).iter().map(|n| n.node).collect();
                let mut sorted = nodes.clone();
                sorted.sort_unstable();
                sorted.dedup();
                prop_assert_eq!(nodes, sorted);
            }
        }

        #[test]
        fn multipliers_positive_and_monotone(raw in prop::collection::vec(0.0f64..100.0, 1..30)) {
            let m = standardize_edge_weights(&raw);
            for i in 0..raw.len() {
                prop_assert!(m[i] > 0.0);
                for j in 0..raw.len() {
                    if raw[j] - raw[i] > 1e-9 {
                        prop_assert!(m[i] < m[j]);
                    }
                }
            }
        }
    }
}
