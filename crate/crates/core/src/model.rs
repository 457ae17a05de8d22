//! Learnable parameters and the full forward pass.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{uniform_embedding, EmbeddingTable, NodeType, TripartiteGraph, UNK_ID};
use crate::propagation::{
    propagate_layer, LayerParams, LayerTrace, LayerVars, ModelVariant, PropagationPlan,
};

/// Named, ordered parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Records every tensor as a tape leaf, in store order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct LayerIds {
    attn_w: usize,
    attn_a: usize,
    update: [usize; 3],
    gate_u1: usize,
    gate_u2: usize,
    gate_b: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct ParamIds {
    words: usize,
    tag_ids: Option<usize>,
    layers: Vec<LayerIds>,
    head: Option<(usize, usize)>,
}

/// Sizes that fix every parameter shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub n_tags: usize,
    pub dim: usize,
    /// Width of vector edge features, 0 for scalar edge weights.
    pub edge_feature_dim: usize,
}

/// Every learnable parameter of one model plus its architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct TagGnnModel {
    variant: ModelVariant,
    dims: ModelDims,
    params: ParamStore,
    ids: ParamIds,
}

/// Result of one forward pass; the tape stays alive for the loss and backward.
#[derive(Debug)]
pub struct ForwardPass {
    pub tape: Tape,
    /// Parameter leaves, aligned with [`TagGnnModel::params`].
    pub params: Vec<Var>,
    /// Initial representations (after dropout in train mode), `N × d`.
    pub initial: Var,
    pub layers: Vec<LayerTrace>,
    /// Representations after the last layer, `N × d`.
    pub output: Var,
    /// `(W_nc, q)` handles when the model has a classification head.
    pub head: Option<(Var, Var)>,
}

impl TagGnnModel {
    /// Fresh model: embeddings uniform(−0.05, 0.05), matrices Glorot-uniform,
    /// biases zero.
    pub fn new(variant: ModelVariant, dims: ModelDims, rng: &mut impl Rng) -> Result<Self> {
        variant.validate()?;
        if dims.dim == 0 || dims.vocab_size == 0 || dims.n_tags == 0 {
            return Err(Error::invalid(format!("invalid model dimensions {dims:?}")));
        }
        let d = dims.dim;
        let mut params = ParamStore::default();
        let words = params.push("word_embeddings", uniform_embedding(dims.vocab_size, d, rng));
        let tag_ids = (variant.tag_id_embeddings && !variant.kind.has_head())
            .then(|| params.push("tag_id_embeddings", uniform_embedding(dims.n_tags, d, rng)));
        let mut layers = Vec::with_capacity(variant.n_layers);
        for l in 0..variant.n_layers {
            let attn_w = params.push(format!("layer{l}.attn_w"), glorot(d, d, rng));
            let attn_a = params.push(
                format!("layer{l}.attn_a"),
                glorot(2 * d + dims.edge_feature_dim, 1, rng),
            );
            let update = if variant.heterogeneous {
                let q = params.push(format!("layer{l}.w_query"), glorot(d, d, rng));
                let i = params.push(format!("layer{l}.w_item"), glorot(d, d, rng));
                let t = params.push(format!("layer{l}.w_tag"), glorot(d, d, rng));
                [q, i, t]
            } else {
                let s = params.push(format!("layer{l}.w_shared"), glorot(d, d, rng));
                [s, s, s]
            };
            let gate_u1 = params.push(format!("layer{l}.gate_u1"), glorot(d, d, rng));
            let gate_u2 = params.push(format!("layer{l}.gate_u2"), glorot(d, d, rng));
            let gate_b = params.push(format!("layer{l}.gate_b"), Tensor::zeros(&[d]));
            layers.push(LayerIds {
                attn_w,
                attn_a,
                update,
                gate_u1,
                gate_u2,
                gate_b,
            });
        }
        let head = variant.kind.has_head().then(|| {
            let w = params.push("head.w", glorot(d, dims.n_tags, rng));
            let q = params.push("head.q", Tensor::zeros(&[dims.n_tags]));
            (w, q)
        });
        Ok(Self {
            variant,
            dims,
            params,
            ids: ParamIds {
                words,
                tag_ids,
                layers,
                head,
            },
        })
    }

    /// Rebuilds a model from a parameter store laid out as [`TagGnnModel::new`] would.
    pub fn from_params(variant: ModelVariant, dims: ModelDims, params: ParamStore) -> Result<Self> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let template = Self::new(variant, dims, &mut rng)?;
        if template.params.names() != params.names() {
            return Err(Error::invalid("parameter names do not match the architecture"));
        }
        for (name, (a, b)) in params
            .names()
            .iter()
            .zip(template.params.tensors().iter().zip(params.tensors()))
        {
            if !a.same_shape(b) {
                return Err(Error::shape(format!(
                    "parameter {name}: expected {:?}, got {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(Self { params, ..template })
    }

    pub fn variant(&self) -> &ModelVariant {
        &self.variant
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn embedding_table(&self) -> EmbeddingTable {
        EmbeddingTable {
            words: self.params.get(self.ids.words).clone(),
            tag_ids: self.ids.tag_ids.map(|i| self.params.get(i).clone()),
            tag_names: self.variant.tag_name_embeddings,
        }
    }

    pub fn layer_params(&self, layer: usize) -> LayerParams {
        let ids = &self.ids.layers[layer];
        let p = |i: usize| self.params.get(i).clone();
        LayerParams {
            attn_w: p(ids.attn_w),
            attn_a: p(ids.attn_a),
            update: [p(ids.update[0]), p(ids.update[1]), p(ids.update[2])],
            gate_u1: p(ids.gate_u1),
            gate_u2: p(ids.gate_u2),
            gate_b: p(ids.gate_b),
        }
    }

    /// Overwrites one layer's parameters. A homogeneous model takes its
    /// shared update matrix from `update[0]`.
    pub fn set_layer_params(&mut self, layer: usize, lp: LayerParams) -> Result<()> {
        let ids = self.ids.layers[layer];
        let mut put = |i: usize, t: Tensor| -> Result<()> {
            if !self.params.get(i).same_shape(&t) {
                return Err(Error::shape(format!(
                    "{}: expected {:?}, got {:?}",
                    self.params.names()[i],
                    self.params.get(i).shape(),
                    t.shape()
                )));
            }
            *self.params.get_mut(i) = t;
            Ok(())
        };
        let [uq, ui, ut] = lp.update;
        put(ids.attn_w, lp.attn_w)?;
        put(ids.attn_a, lp.attn_a)?;
        if self.variant.heterogeneous {
            put(ids.update[0], uq)?;
            put(ids.update[1], ui)?;
            put(ids.update[2], ut)?;
        } else {
            put(ids.update[0], uq)?;
        }
        put(ids.gate_u1, lp.gate_u1)?;
        put(ids.gate_u2, lp.gate_u2)?;
        put(ids.gate_b, lp.gate_b)
    }

    /// Parameter ids of the classification head `(W_nc, q)`.
    pub fn head_ids(&self) -> Option<(usize, usize)> {
        self.ids.head
    }

    pub fn tag_id_param(&self) -> Option<usize> {
        self.ids.tag_ids
    }

    pub fn word_param(&self) -> usize {
        self.ids.words
    }

    /// Runs the model on `graph`. Passing `dropout` as `Some((p, rng))`
    /// enables inverted feature dropout on the initial representations.
    pub fn forward(
        &self,
        graph: &TripartiteGraph,
        plan: &PropagationPlan,
        dropout: Option<(f64, &mut dyn rand::RngCore)>,
    ) -> Result<ForwardPass> {
        self.check_graph(graph, plan)?;
        let mut tape = Tape::new();
        let params = self.params.bind(&mut tape);
        let mut initial = self.initial_representations(&mut tape, &params, graph)?;
        if let Some((p, rng)) = dropout {
            if p > 0.0 {
                initial = apply_dropout(&mut tape, initial, p, rng)?;
            }
        }
        let mut h = initial;
        let mut layers = Vec::with_capacity(self.ids.layers.len());
        for ids in &self.ids.layers {
            let vars = LayerVars {
                attn_w: params[ids.attn_w],
                attn_a: params[ids.attn_a],
                update: ids.update.map(|i| params[i]),
                gate_u1: params[ids.gate_u1],
                gate_u2: params[ids.gate_u2],
                gate_b: params[ids.gate_b],
            };
            let trace = propagate_layer(&mut tape, plan, h, &vars, self.variant.gated)?;
            h = trace.output;
            layers.push(trace);
        }
        let head = self.ids.head.map(|(w, q)| (params[w], params[q]));
        Ok(ForwardPass {
            tape,
            params,
            initial,
            layers,
            output: h,
            head,
        })
    }

    /// Eval-mode tag scores for each item: dot products with the final tag
    /// representations, or head logits for the QI variant.
    pub fn score_items(&self, graph: &TripartiteGraph, items: &[usize]) -> Result<Vec<Vec<f64>>> {
        let plan = PropagationPlan::new(graph, self.variant.kind);
        let pass = self.forward(graph, &plan, None)?;
        let h = pass.tape.value(pass.output);
        let item_off = graph.offset(NodeType::Item);
        let tag_off = graph.offset(NodeType::Tag);
        let n_tags = graph.n_tags();
        let mut out = Vec::with_capacity(items.len());
        for &i in items {
            if i >= graph.n_items() {
                return Err(Error::invalid(format!("item {i} outside graph of {} items", graph.n_items())));
            }
            let hi = h.row(item_off + i);
            let scores = match pass.head {
                Some((w, q)) => {
                    let (w, q) = (pass.tape.value(w), pass.tape.value(q));
                    (0..n_tags)
                        .map(|t| hi.iter().enumerate().fold(q.data()[t], |acc, (k, x)| acc + x * w.get(k, t)))
                        .collect()
                }
                None => (0..n_tags)
                    .map(|t| hi.iter().zip(h.row(tag_off + t)).map(|(a, b)| a * b).sum())
                    .collect(),
            };
            out.push(scores);
        }
        Ok(out)
    }

    fn check_graph(&self, graph: &TripartiteGraph, plan: &PropagationPlan) -> Result<()> {
        if graph.n_tags() != self.dims.n_tags {
            return Err(Error::invalid(format!(
                "graph has {} tags, model expects {}",
                graph.n_tags(),
                self.dims.n_tags
            )));
        }
        if plan.n_nodes() != graph.n_nodes() {
            return Err(Error::invalid("propagation plan built for a different graph"));
        }
        let edge_dim = graph.edge_features().map_or(0, |f| f.dim);
        if edge_dim != self.dims.edge_feature_dim {
            return Err(Error::invalid(format!(
                "graph edge features have width {edge_dim}, model expects {}",
                self.dims.edge_feature_dim
            )));
        }
        Ok(())
    }

    fn initial_representations(
        &self,
        tape: &mut Tape,
        params: &[Var],
        graph: &TripartiteGraph,
    ) -> Result<Var> {
        let n = graph.n_nodes();
        let d = self.dims.dim;
        let mut token_ids = Vec::new();
        let mut token_nodes = Vec::new();
        let mut token_scale = Vec::new();
        for v in 0..n {
            let node = graph.node_ref(v);
            if node.node_type == NodeType::Tag && !self.variant.tag_name_embeddings {
                continue;
            }
            let ids: Vec<usize> = graph
                .tokens(node)
                .iter()
                .copied()
                .filter(|&t| t != UNK_ID)
                .collect();
            if let Some(&bad) = ids.iter().find(|&&t| t >= self.dims.vocab_size) {
                return Err(Error::invalid(format!(
                    "token id {bad} outside vocabulary of {}",
                    self.dims.vocab_size
                )));
            }
            let inv = 1.0 / ids.len().max(1) as f64;
            for t in ids {
                token_ids.push(t);
                token_nodes.push(v);
                token_scale.push(inv);
            }
        }
        let words = if token_ids.is_empty() {
            None
        } else {
            let rows = tape.gather_rows(params[self.ids.words], &token_ids)?;
            let scale = tape.leaf(Tensor::vector(token_scale)?);
            let scaled = tape.scale_rows(rows, scale)?;
            Some(tape.scatter_add_rows(scaled, &token_nodes, n)?)
        };
        let tags = match self.ids.tag_ids {
            Some(id) if graph.n_tags() > 0 => {
                let off = graph.offset(NodeType::Tag);
                let rows: Vec<usize> = (off..off + graph.n_tags()).collect();
                Some(tape.scatter_add_rows(params[id], &rows, n)?)
            }
            _ => None,
        };
        Ok(match (words, tags) {
            (Some(w), Some(t)) => tape.add(w, t)?,
            (Some(w), None) => w,
            (None, Some(t)) => t,
            (None, None) => tape.leaf(Tensor::zeros(&[n, d])),
        })
    }
}

fn apply_dropout(tape: &mut Tape, x: Var, p: f64, rng: &mut dyn rand::RngCore) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("dropout rate {p} outside [0, 1)")));
    }
    let keep = 1.0 / (1.0 - p);
    let shape = tape.value(x).shape().to_vec();
    let mut mask = Tensor::zeros(&shape);
    for m in mask.data_mut() {
        if rng.random::<f64>() >= p {
            *m = keep;
        }
    }
    tape.dropout(x, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{initial_node_representation, NodeRef};
    use crate::propagation::{gated_update, VariantKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_graph() -> TripartiteGraph {
        TripartiteGraph::build(
            vec![vec![1, 2], vec![3]],
            vec![vec![1, 4], vec![2], vec![5, 0]],
            vec![vec![4], vec![], vec![1, 5]],
            &[(0, 0, 3.0), (1, 0, 1.0), (1, 1, 2.0)],
            &[(0, 0), (0, 2), (1, 1)],
        )
        .unwrap()
    }

    fn dims() -> ModelDims {
        ModelDims {
            vocab_size: 6,
            n_tags: 3,
            dim: 4,
            edge_feature_dim: 0,
        }
    }

    fn model(kind: VariantKind, layers: usize) -> TagGnnModel {
        let mut v = ModelVariant::new(kind);
        v.n_layers = layers;
        TagGnnModel::new(v, dims(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn tape_initial_matches_plain_function() {
        let g = tiny_graph();
        let m = model(VariantKind::Full, 0);
        let plan = PropagationPlan::new(&g, VariantKind::Full);
        let fp = m.forward(&g, &plan, None).unwrap();
        let h = fp.tape.value(fp.output);
        let table = m.embedding_table();
        for v in 0..g.n_nodes() {
            let expect = initial_node_representation(g.node_ref(v), &g, &table);
            for (a, b) in h.row(v).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_layers_returns_initial() {
        let g = tiny_graph();
        let m = model(VariantKind::It, 0);
        let plan = PropagationPlan::new(&g, VariantKind::It);
        let fp = m.forward(&g, &plan, None).unwrap();
        assert_eq!(fp.output, fp.initial);
    }

    #[test]
    fn tape_layer_matches_plain_composition() {
        let g = tiny_graph();
        let m = model(VariantKind::Full, 1);
        let plan = PropagationPlan::new(&g, VariantKind::Full);
        let fp = m.forward(&g, &plan, None).unwrap();
        let h0 = fp.tape.value(fp.initial).clone();
        let h1 = fp.tape.value(fp.output);
        let lp = m.layer_params(0);
        for v in 0..g.n_nodes() {
            if g.is_isolated(v) {
                assert_eq!(h1.row(v), h0.row(v));
                continue;
            }
            let att = crate::propagation::attention_coefficients(v, &h0, &lp, &g).unwrap();
            let reps: Vec<&[f64]> = g.neighbors(v).iter().map(|n| h0.row(n.node)).collect();
            let hm = crate::propagation::aggregate_message(&att.applied, &reps, &lp.attn_w).unwrap();
            let expect = gated_update(h0.row(v), &hm, g.node_ref(v).node_type, &lp);
            for (a, b) in h1.row(v).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12, "node {v}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn isolated_item_keeps_initial_vector() {
        let g = TripartiteGraph::build(
            vec![vec![1]],
            vec![vec![2], vec![3]],
            vec![vec![1]],
            &[(0, 0, 1.0)],
            &[(0, 0)],
        )
        .unwrap();
        let m = TagGnnModel::new(
            ModelVariant {
                n_layers: 4,
                ..ModelVariant::new(VariantKind::Full)
            },
            ModelDims {
                vocab_size: 4,
                n_tags: 1,
                dim: 3,
                edge_feature_dim: 0,
            },
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        let plan = PropagationPlan::new(&g, VariantKind::Full);
        let fp = m.forward(&g, &plan, None).unwrap();
        let item1 = g.global(NodeRef::item(1));
        let before = fp.tape.value(fp.initial).row(item1).to_vec();
        let after = fp.tape.value(fp.output).row(item1).to_vec();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&before), bits(&after));
    }

    #[test]
    fn from_params_round_trips_and_checks_layout() {
        let m = model(VariantKind::Qi, 2);
        let again = TagGnnModel::from_params(m.variant().clone(), m.dims(), m.params().clone()).unwrap();
        assert_eq!(m, again);
        let other = model(VariantKind::Full, 2);
        assert!(TagGnnModel::from_params(m.variant().clone(), m.dims(), other.params().clone()).is_err());
    }

    #[test]
    fn dropout_zeroes_some_entries_and_rescales_others() {
        let g = tiny_graph();
        let m = model(VariantKind::Full, 0);
        let plan = PropagationPlan::new(&g, VariantKind::Full);
        let clean = m.forward(&g, &plan, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dropped = m.forward(&g, &plan, Some((0.5, &mut rng))).unwrap();
        let (a, b) = (clean.tape.value(clean.output), dropped.tape.value(dropped.output));
        let mut zeroed = 0;
        for (x, y) in a.data().iter().zip(b.data()) {
            if *y == 0.0 && *x != 0.0 {
                zeroed += 1;
            } else {
                assert!((y - 2.0 * x).abs() < 1e-15);
            }
        }
        assert!(zeroed > 0);
    }
}
