//! One message-passing layer: neighbor attention, aggregation and the gated
//! per-type update, plus the precomputed edge layout the tape version runs on.
//!
//! Representations are row vectors, so a transform `W` is applied as `h · W`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ops, segment_softmax, Tape, Tensor, Var, LEAKY_RELU_SLOPE};
use crate::error::{Error, Result};
use crate::graph::{NodeType, TripartiteGraph};

/// Which subgraph a model propagates over and what it is trained against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    /// Item–tag graph, link prediction.
    It,
    /// Query–item graph, classification head.
    Qi,
    /// Full tripartite graph, link prediction.
    Full,
}

impl VariantKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::It => "it",
            VariantKind::Qi => "qi",
            VariantKind::Full => "full",
        }
    }

    pub fn uses_query_edges(self) -> bool {
        matches!(self, VariantKind::Qi | VariantKind::Full)
    }

    pub fn uses_tag_edges(self) -> bool {
        matches!(self, VariantKind::It | VariantKind::Full)
    }

    pub fn has_head(self) -> bool {
        self == VariantKind::Qi
    }
}

impl std::str::FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "it" => Ok(VariantKind::It),
            "qi" => Ok(VariantKind::Qi),
            "full" => Ok(VariantKind::Full),
            other => Err(Error::invalid(format!("unknown variant '{other}'"))),
        }
    }
}

/// Architecture switches, including the ablation toggles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub kind: VariantKind,
    /// Separate update matrix per node type; `false` shares one.
    pub heterogeneous: bool,
    /// Tag names contribute word embeddings to tag features.
    pub tag_name_embeddings: bool,
    /// Learnable per-tag id embedding added to tag features.
    pub tag_id_embeddings: bool,
    /// Gated skip connection; `false` replaces a node by its update
    /// (plain GAT-style propagation when combined with a shared update).
    pub gated: bool,
    pub n_layers: usize,
}

impl ModelVariant {
    pub fn new(kind: VariantKind) -> Self {
        Self {
            kind,
            heterogeneous: true,
            tag_name_embeddings: true,
            tag_id_embeddings: true,
            gated: true,
            n_layers: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.uses_tag_edges() && !(self.tag_name_embeddings || self.tag_id_embeddings) {
            return Err(Error::invalid(
                "link prediction needs tag name or tag id embeddings",
            ));
        }
        Ok(())
    }
}

/// Parameters of one layer as plain tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// Shared attention transform, `d × d`.
    pub attn_w: Tensor,
    /// Attention context, `(2d + e) × 1`.
    pub attn_a: Tensor,
    /// Update matrices indexed by [`NodeType::slot`]; all three are the same
    /// tensor for a homogeneous model.
    pub update: [Tensor; 3],
    pub gate_u1: Tensor,
    pub gate_u2: Tensor,
    /// Gate bias, length `d`.
    pub gate_b: Tensor,
}

/// Attention over one node's neighbors, in adjacency order.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention {
    /// Softmax weights; sum to 1.
    pub normalized: Vec<f64>,
    /// Weights actually applied to messages. With scalar edge weights each
    /// entry is multiplied by the edge's multiplier; otherwise equal to
    /// `normalized`.
    pub applied: Vec<f64>,
}

fn row_times(h: &[f64], w: &Tensor) -> Vec<f64> {
    let cols = w.cols();
    let mut out = vec![0.0; cols];
    for (k, &x) in h.iter().enumerate() {
        for (o, &m) in out.iter_mut().zip(w.row(k)) {
            *o += x * m;
        }
    }
    out
}

/// Attention weights of `center`'s neighbors given current representations
/// `h` (`N × d`, global node order).
pub fn attention_coefficients(
    center: usize,
    h: &Tensor,
    params: &LayerParams,
    graph: &TripartiteGraph,
) -> Result<Attention> {
    let nbrs = graph.neighbors(center);
    if nbrs.is_empty() {
        return Err(Error::invalid(format!("node {center} is isolated")));
    }
    let features = graph.edge_features();
    let d = h.cols();
    let a = params.attn_a.data();
    let expect = 2 * d + features.map_or(0, |f| f.dim);
    if a.len() != expect {
        return Err(Error::shape(format!(
            "attention context has {} entries, expected {expect}",
            a.len()
        )));
    }
    let wc = row_times(h.row(center), &params.attn_w);
    let center_term: f64 = wc.iter().zip(&a[..d]).map(|(x, y)| x * y).sum();
    let scores: Vec<f64> = nbrs
        .iter()
        .map(|n| {
            let wn = row_times(h.row(n.node), &params.attn_w);
            let mut s = center_term + wn.iter().zip(&a[d..2 * d]).map(|(x, y)| x * y).sum::<f64>();
            if let (Some(f), Some(k)) = (features, n.qi_edge) {
                let row = &f.values[k * f.dim..(k + 1) * f.dim];
                s += row.iter().zip(&a[2 * d..]).map(|(x, y)| x * y).sum::<f64>();
            }
            ops::leaky_relu(s, LEAKY_RELU_SLOPE)
        })
        .collect();
    let normalized = segment_softmax(&scores, &vec![0; scores.len()])?;
    let applied = if features.is_some() {
        normalized.clone()
    } else {
        normalized
            .iter()
            .zip(nbrs)
            .map(|(al, n)| al * n.weight)
            .collect()
    };
    Ok(Attention {
        normalized,
        applied,
    })
}

/// `ReLU(Σ α_w · h_w W)`.
pub fn aggregate_message(alpha: &[f64], neighbor_reps: &[&[f64]], w: &Tensor) -> Result<Vec<f64>> {
    if alpha.len() != neighbor_reps.len() {
        return Err(Error::shape(format!(
            "{} attention weights for {} neighbors",
            alpha.len(),
            neighbor_reps.len()
        )));
    }
    let mut acc = vec![0.0; w.cols()];
    for (&al, h) in alpha.iter().zip(neighbor_reps) {
        for (o, x) in acc.iter_mut().zip(row_times(h, w)) {
            *o += al * x;
        }
    }
    Ok(acc.into_iter().map(|x| x.max(0.0)).collect())
}

/// Gated skip connection:
/// `ĥ = ReLU((h_v + h_m) W_type)`, `z = σ(ĥ U1 + h_v U2 + b)`,
/// `h_new = z ⊙ ĥ + (1 − z) ⊙ h_v`.
pub fn gated_update(h_v: &[f64], h_m: &[f64], node_type: NodeType, params: &LayerParams) -> Vec<f64> {
    let summed: Vec<f64> = h_v.iter().zip(h_m).map(|(a, b)| a + b).collect();
    let hat: Vec<f64> = row_times(&summed, &params.update[node_type.slot()])
        .into_iter()
        .map(|x| x.max(0.0))
        .collect();
    let g1 = row_times(&hat, &params.gate_u1);
    let g2 = row_times(h_v, &params.gate_u2);
    (0..h_v.len())
        .map(|k| {
            let z = ops::sigmoid(g1[k] + g2[k] + params.gate_b.data()[k]);
            z * hat[k] + (1.0 - z) * h_v[k]
        })
        .collect()
}

/// Edge layout and node bookkeeping for one graph under one variant.
///
/// Directed edges are listed center by center in global order, each center's
/// neighbors in adjacency order.
#[derive(Clone, Debug)]
pub struct PropagationPlan {
    n_nodes: usize,
    centers: Vec<usize>,
    neighbors: Vec<usize>,
    multipliers: Tensor,
    edge_features: Option<Tensor>,
    active: [Vec<usize>; 3],
    isolated: Vec<usize>,
    reassemble: Vec<usize>,
}

impl PropagationPlan {
    pub fn new(graph: &TripartiteGraph, kind: VariantKind) -> Self {
        let n = graph.n_nodes();
        let features = graph.edge_features();
        let mut centers = Vec::new();
        let mut neighbors = Vec::new();
        let mut mult = Vec::new();
        let mut feat = Vec::new();
        let mut degree = vec![0usize; n];
        for (v, deg) in degree.iter_mut().enumerate() {
            for nb in graph.neighbors(v) {
                let keep = match nb.qi_edge {
                    Some(_) => kind.uses_query_edges(),
                    None => kind.uses_tag_edges(),
                };
                if !keep {
                    continue;
                }
                centers.push(v);
                neighbors.push(nb.node);
                mult.push(nb.weight);
                if let Some(f) = features {
                    match nb.qi_edge {
                        Some(k) => feat.extend_from_slice(&f.values[k * f.dim..(k + 1) * f.dim]),
                        None => feat.extend(std::iter::repeat_n(0.0, f.dim)),
                    }
                }
                *deg += 1;
            }
        }
        let mut active: [Vec<usize>; 3] = Default::default();
        let mut isolated = Vec::new();
        for (v, &deg) in degree.iter().enumerate() {
            if deg == 0 {
                isolated.push(v);
            } else {
                active[graph.node_ref(v).node_type.slot()].push(v);
            }
        }
        // Row of each node in the stacked [isolated; query; item; tag] result.
        let mut reassemble = vec![0; n];
        let order = isolated.iter().chain(active.iter().flatten());
        for (row, &v) in order.enumerate() {
            reassemble[v] = row;
        }
        let n_edges = centers.len();
        let multipliers = if n_edges == 0 {
            Tensor::zeros(&[1, 1])
        } else {
            Tensor::matrix(n_edges, 1, mult).expect("edge count > 0")
        };
        let edge_features = match features {
            Some(f) if n_edges > 0 => Some(Tensor::matrix(n_edges, f.dim, feat).expect("edge count > 0")),
            _ => None,
        };
        Self {
            n_nodes: n,
            centers,
            neighbors,
            multipliers,
            edge_features,
            active,
            isolated,
            reassemble,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.centers.len()
    }

    /// `(center, neighbor)` of every directed edge, in attention order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.centers.iter().copied().zip(self.neighbors.iter().copied())
    }

    pub fn is_isolated(&self, v: usize) -> bool {
        self.isolated.binary_search(&v).is_ok()
    }

    pub fn isolated(&self) -> &[usize] {
        &self.isolated
    }

    pub fn edge_feature_dim(&self) -> Option<usize> {
        self.edge_features.as_ref().map(|f| f.cols())
    }
}

/// Tape handles for one layer's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub attn_w: Var,
    pub attn_a: Var,
    pub update: [Var; 3],
    pub gate_u1: Var,
    pub gate_u2: Var,
    pub gate_b: Var,
}

/// Attention values recorded by [`propagate_layer`].
#[derive(Clone, Copy, Debug)]
pub struct LayerTrace {
    pub output: Var,
    /// Softmax weights per directed edge (`E × 1`), `None` when the layer has no edges.
    pub normalized: Option<Var>,
    /// Weights applied to messages.
    pub applied: Option<Var>,
}

/// One synchronous layer over all nodes. Isolated nodes are carried over
/// unchanged (bit-exact); every other node is updated from the pre-layer `h`.
pub fn propagate_layer(
    tape: &mut Tape,
    plan: &PropagationPlan,
    h: Var,
    layer: &LayerVars,
    gated: bool,
) -> Result<LayerTrace> {
    if plan.n_edges() == 0 {
        return Ok(LayerTrace {
            output: h,
            normalized: None,
            applied: None,
        });
    }
    let wh = tape.matmul(h, layer.attn_w)?;
    let wc = tape.gather_rows(wh, &plan.centers)?;
    let wn = tape.gather_rows(wh, &plan.neighbors)?;
    let mut parts = vec![wc, wn];
    if let Some(f) = &plan.edge_features {
        parts.push(tape.leaf(f.clone()));
    }
    let joined = tape.concat(&parts, 1)?;
    let raw = tape.matmul(joined, layer.attn_a)?;
    let scores = tape.leaky_relu(raw, LEAKY_RELU_SLOPE);
    let normalized = tape.segment_softmax(scores, &plan.centers)?;
    let applied = if plan.edge_features.is_some() {
        normalized
    } else {
        let m = tape.leaf(plan.multipliers.clone());
        tape.mul(normalized, m)?
    };
    let messages = tape.scale_rows(wn, applied)?;
    let summed = tape.scatter_add_rows(messages, &plan.centers, plan.n_nodes)?;
    let hm = tape.relu(summed);
    let pre = tape.add(h, hm)?;

    let mut pieces = Vec::with_capacity(4);
    if !plan.isolated.is_empty() {
        pieces.push(tape.gather_rows(h, &plan.isolated)?);
    }
    for t in NodeType::ALL {
        let nodes = &plan.active[t.slot()];
        if nodes.is_empty() {
            continue;
        }
        let s = tape.gather_rows(pre, nodes)?;
        let prev = tape.gather_rows(h, nodes)?;
        let lin = tape.matmul(s, layer.update[t.slot()])?;
        let hat = tape.relu(lin);
        let new = if gated {
            let a = tape.matmul(hat, layer.gate_u1)?;
            let b = tape.matmul(prev, layer.gate_u2)?;
            let ab = tape.add(a, b)?;
            let logits = tape.add_row(ab, layer.gate_b)?;
            let z = tape.sigmoid(logits);
            let shape = tape.value(z).shape().to_vec();
            let ones = tape.leaf(Tensor::full(&shape, 1.0));
            let keep = tape.sub(ones, z)?;
            let x = tape.mul(z, hat)?;
            let y = tape.mul(keep, prev)?;
            tape.add(x, y)?
        } else {
            hat
        };
        pieces.push(new);
    }
    let stacked = tape.concat(&pieces, 0)?;
    let output = tape.gather_rows(stacked, &plan.reassemble)?;
    Ok(LayerTrace {
        output,
        normalized: Some(normalized),
        applied: Some(applied),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn zeros_layer(d: usize) -> LayerParams {
        LayerParams {
            attn_w: Tensor::identity(d),
            attn_a: Tensor::zeros(&[2 * d, 1]),
            update: [Tensor::identity(d), Tensor::identity(d), Tensor::identity(d)],
            gate_u1: Tensor::zeros(&[d, d]),
            gate_u2: Tensor::zeros(&[d, d]),
            gate_b: Tensor::zeros(&[d]),
        }
    }

    fn empty(n: usize) -> Vec<Vec<usize>> {
        vec![Vec::new(); n]
    }

    #[test]
    fn single_neighbor_gets_full_weight() {
        let g = TripartiteGraph::build(empty(0), empty(1), empty(1), &[], &[(0, 0)]).unwrap();
        let h = Tensor::matrix(2, 2, vec![0.3, -0.1, 0.7, 0.2]).unwrap();
        let att = attention_coefficients(0, &h, &zeros_layer(2), &g).unwrap();
        assert_eq!(att.normalized, vec![1.0]);
        assert_eq!(att.applied, vec![1.0]);
    }

    #[test]
    fn symmetric_neighbors_split_evenly() {
        let g = TripartiteGraph::build(empty(2), empty(1), empty(0), &[(0, 0, 3.0), (1, 0, 3.0)], &[])
            .unwrap();
        let h = Tensor::matrix(3, 2, vec![1.0, 2.0, 1.0, 2.0, -1.0, 0.5]).unwrap();
        let mut p = zeros_layer(2);
        p.attn_a = Tensor::matrix(4, 1, vec![0.3, -0.2, 0.9, 0.4]).unwrap();
        let item = g.global(crate::graph::NodeRef::item(0));
        let att = attention_coefficients(item, &h, &p, &g).unwrap();
        assert_eq!(att.normalized, vec![0.5, 0.5]);
        let e = std::f64::consts::LN_2;
        assert_abs_diff_eq!(att.applied[0], 0.5 * e, epsilon = 1e-15);
        assert_abs_diff_eq!(att.applied[1], 0.5 * e, epsilon = 1e-15);
    }

    #[test]
    fn equal_scores_scaled_by_edge_weights() {
        // Raw weights w1 > w2 standardize to ±1, softplus(±1) are the multipliers.
        let g = TripartiteGraph::build(empty(2), empty(1), empty(0), &[(0, 0, 5.0), (1, 0, 1.0)], &[])
            .unwrap();
        let h = Tensor::zeros(&[3, 2]);
        let item = g.global(crate::graph::NodeRef::item(0));
        let att = attention_coefficients(item, &h, &zeros_layer(2), &g).unwrap();
        assert_eq!(att.normalized, vec![0.5, 0.5]);
        assert_abs_diff_eq!(att.applied[0], 0.5 * ops::softplus(1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(att.applied[1], 0.5 * ops::softplus(-1.0), epsilon = 1e-15);
        // With multipliers e₁ = 2, e₂ = 1 the applied weights would be [1.0, 0.5].
        let scaled: Vec<f64> = att.normalized.iter().zip([2.0, 1.0]).map(|(a, e)| a * e).collect();
        assert_eq!(scaled, vec![1.0, 0.5]);
    }

    #[test]
    fn isolated_center_is_rejected() {
        let g = TripartiteGraph::build(empty(0), empty(1), empty(0), &[], &[]).unwrap();
        let h = Tensor::zeros(&[1, 2]);
        assert!(attention_coefficients(0, &h, &zeros_layer(2), &g).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let i2 = Tensor::identity(2);
        let h = [1.0, 3.0];
        assert_eq!(aggregate_message(&[1.0], &[&h], &i2).unwrap(), vec![1.0, 3.0]);
        assert_eq!(
            aggregate_message(&[1.0], &[&h], &Tensor::zeros(&[2, 2])).unwrap(),
            vec![0.0, 0.0]
        );
        // pre-activation 0.5·[1,−2] + 0.5·[3,0] = [2,−1]
        let h1 = [1.0, -2.0];
        let h2 = [3.0, 0.0];
        assert_eq!(
            aggregate_message(&[0.5, 0.5], &[&h1, &h2], &i2).unwrap(),
            vec![2.0, 0.0]
        );
        assert!(aggregate_message(&[1.0], &[], &i2).is_err());
    }

    #[test]
    fn gate_examples() {
        let p = zeros_layer(2);
        let hv = [0.4, 1.0];
        let hm = [0.2, -3.0];
        // ĥ = ReLU(hv + hm) = [0.6, 0]; z = 0.5
        let out = gated_update(&hv, &hm, NodeType::Item, &p);
        assert_abs_diff_eq!(out[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 0.5, epsilon = 1e-15);

        let mut open = p.clone();
        open.gate_b = Tensor::full(&[2], 50.0);
        let out = gated_update(&hv, &hm, NodeType::Item, &open);
        assert_abs_diff_eq!(out[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 0.0, epsilon = 1e-12);

        let mut closed = p;
        closed.gate_b = Tensor::full(&[2], -50.0);
        let out = gated_update(&hv, &[0.0, 0.0], NodeType::Tag, &closed);
        assert_abs_diff_eq!(out[0], hv[0], epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], hv[1], epsilon = 1e-12);
    }

    #[test]
    fn variant_kind_parses() {
        assert_eq!("IT".parse::<VariantKind>().unwrap(), VariantKind::It);
        assert_eq!("full".parse::<VariantKind>().unwrap(), VariantKind::Full);
        assert!("gcn".parse::<VariantKind>().is_err());
    }
}
