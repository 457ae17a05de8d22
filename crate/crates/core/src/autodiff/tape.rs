//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every operation appends a node holding its forward value. Nodes only
//! reference earlier nodes, so the tape is a DAG in topological order and
//! [`Tape::backward`] is a single reverse sweep.

use super::ops::{self, sigmoid};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow { a: Var, row: Var },
    ScaleRows { a: Var, s: Var },
    Scale { a: Var, c: f64 },
    Concat { parts: Vec<Var>, axis: usize },
    LeakyRelu { a: Var, slope: f64 },
    Relu(Var),
    Sigmoid(Var),
    RowDot(Var, Var),
    SegmentSoftmax { a: Var, segments: Vec<usize> },
    Mean(Var),
    Bce { logits: Var, labels: Tensor },
    Dropout { a: Var, mask: Tensor },
    Gather { a: Var, idx: Vec<usize> },
    ScatterAdd { a: Var, idx: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Recorded computation graph.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, with zeros for unreachable nodes.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Records an input tensor. Parameters and constants are both leaves;
    /// constants simply never have their gradient read.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(
            Op::MatMul {
                a,
                b,
                trans_b: false,
            },
            value,
        ))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(
            Op::MatMul {
                a,
                b,
                trans_b: true,
            },
            value,
        ))
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if !self.value(a).same_shape(self.value(b)) {
            return Err(Error::shape(format!(
                "{op}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), value))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), value))
    }

    /// Adds the vector `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if av.cols() != rv.len() {
            return Err(Error::shape(format!(
                "add_row: {:?} + row {:?}",
                av.shape(),
                rv.shape()
            )));
        }
        let mut value = av.clone();
        let cols = av.cols();
        for (i, x) in value.data_mut().iter_mut().enumerate() {
            *x += rv.data()[i % cols];
        }
        Ok(self.push(Op::AddRow { a, row }, value))
    }

    /// Multiplies row `i` of `a` by `s[i]`.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var> {
        let (av, sv) = (self.value(a), self.value(s));
        if av.rows() != sv.len() {
            return Err(Error::shape(format!(
                "scale_rows: {:?} by {:?}",
                av.shape(),
                sv.shape()
            )));
        }
        let mut value = av.clone();
        for r in 0..av.rows() {
            let k = sv.data()[r];
            value.row_mut(r).iter_mut().for_each(|x| *x *= k);
        }
        Ok(self.push(Op::ScaleRows { a, s }, value))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(Op::Scale { a, c }, value)
    }

    /// Concatenates 2-D values along `axis` (0 = stack rows, 1 = join columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() || axis > 1 {
            return Err(Error::shape("concat: need >= 1 part and axis 0 or 1"));
        }
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = if axis == 0 {
            let cols = values[0].cols();
            if values.iter().any(|v| v.cols() != cols) {
                return Err(Error::shape("concat rows: column counts differ"));
            }
            let rows = values.iter().map(|v| v.rows()).sum();
            let data = values.iter().flat_map(|v| v.data().iter().copied()).collect();
            Tensor::matrix(rows, cols, data)?
        } else {
            let rows = values[0].rows();
            if values.iter().any(|v| v.rows() != rows) {
                return Err(Error::shape("concat cols: row counts differ"));
            }
            let cols = values.iter().map(|v| v.cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for v in &values {
                    data.extend_from_slice(v.row(r));
                }
            }
            Tensor::matrix(rows, cols, data)?
        };
        Ok(self.push(
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            value,
        ))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| ops::leaky_relu(x, slope));
        self.push(Op::LeakyRelu { a, slope }, value)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    /// Row-wise dot products of two equally shaped matrices.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("row_dot", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = (0..av.rows())
            .map(|r| av.row(r).iter().zip(bv.row(r)).map(|(x, y)| x * y).sum())
            .collect();
        let value = Tensor::vector(data)?;
        Ok(self.push(Op::RowDot(a, b), value))
    }

    pub fn segment_softmax(&mut self, a: Var, segments: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let out = ops::segment_softmax(av.data(), segments)?;
        if out.is_empty() {
            return Err(Error::shape("segment_softmax: empty input"));
        }
        let value = Tensor::new(av.shape().to_vec(), out)?;
        Ok(self.push(
            Op::SegmentSoftmax {
                a,
                segments: segments.to_vec(),
            },
            value,
        ))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Op::Mean(a), Tensor::scalar(m))
    }

    /// Mean binary cross-entropy between `logits` and 0/1 `labels`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: Tensor) -> Result<Var> {
        let lv = self.value(logits);
        if !lv.same_shape(&labels) {
            return Err(Error::shape(format!(
                "bce_with_logits: logits {:?} vs labels {:?}",
                lv.shape(),
                labels.shape()
            )));
        }
        let loss = ops::bce_with_logits(lv.data(), labels.data())?;
        Ok(self.push(Op::Bce { logits, labels }, Tensor::scalar(loss)))
    }

    /// Multiplies by a precomputed mask. Inverted dropout passes
    /// `keep / (1 − p)` entries so no rescaling is needed at eval time.
    pub fn dropout(&mut self, a: Var, mask: Tensor) -> Result<Var> {
        if !self.value(a).same_shape(&mask) {
            return Err(Error::shape("dropout: mask shape differs"));
        }
        let value = self.value(a).zip_map(&mask, |x, m| x * m);
        Ok(self.push(Op::Dropout { a, mask }, value))
    }

    /// Selects rows `idx` of `a` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let (rows, cols) = (av.rows(), av.cols());
        if idx.is_empty() {
            return Err(Error::shape("gather_rows: empty index"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::shape(format!(
                "gather_rows: index {bad} out of {rows} rows"
            )));
        }
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(av.row(i));
        }
        let value = Tensor::matrix(idx.len(), cols, data)?;
        Ok(self.push(
            Op::Gather {
                a,
                idx: idx.to_vec(),
            },
            value,
        ))
    }

    /// Sums row `k` of `a` into output row `idx[k]` of an `out_rows`-row
    /// result. Rows receiving no contribution are zero; the first
    /// contribution to a row is copied rather than added to zero, so a
    /// one-to-one scatter reproduces its input bit for bit.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], out_rows: usize) -> Result<Var> {
        let av = self.value(a);
        if idx.len() != av.rows() {
            return Err(Error::shape(format!(
                "scatter_add_rows: {} indices for {} rows",
                idx.len(),
                av.rows()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= out_rows) {
            return Err(Error::shape(format!(
                "scatter_add_rows: target {bad} out of {out_rows} rows"
            )));
        }
        let cols = av.cols();
        let mut value = Tensor::zeros(&[out_rows, cols]);
        let mut touched = vec![false; out_rows];
        for (k, &t) in idx.iter().enumerate() {
            let src = av.row(k);
            let dst = value.row_mut(t);
            if touched[t] {
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
            } else {
                dst.copy_from_slice(src);
                touched[t] = true;
            }
        }
        Ok(self.push(
            Op::ScatterAdd {
                a,
                idx: idx.to_vec(),
            },
            value,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if *trans_b {
                    // C = A·Bᵀ: dA = G·B, dB = Gᵀ·A
                    accumulate(grads, *a, g.matmul(bv)?);
                    accumulate(grads, *b, g.transpose().matmul(av)?);
                } else {
                    // C = A·B: dA = G·Bᵀ, dB = Aᵀ·G
                    let ga = g.matmul_t(bv)?.reshape(av.shape())?;
                    accumulate(grads, *a, ga);
                    let gb = av.transpose().matmul(g)?.reshape(bv.shape())?;
                    accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
            }
            Op::AddRow { a, row } => {
                accumulate(grads, *a, g.clone());
                let rv = self.value(*row);
                let cols = rv.len();
                let mut gr = vec![0.0; cols];
                for (k, x) in g.data().iter().enumerate() {
                    gr[k % cols] += x;
                }
                accumulate(grads, *row, Tensor::new(rv.shape().to_vec(), gr)?);
            }
            Op::ScaleRows { a, s } => {
                let (av, sv) = (self.value(*a), self.value(*s));
                let mut ga = g.clone();
                let mut gs = vec![0.0; sv.len()];
                for r in 0..av.rows() {
                    let k = sv.data()[r];
                    ga.row_mut(r).iter_mut().for_each(|x| *x *= k);
                    gs[r] = g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum();
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *s, Tensor::new(sv.shape().to_vec(), gs)?);
            }
            Op::Scale { a, c } => accumulate(grads, *a, g.map(|x| x * c)),
            Op::Concat { parts, axis } => {
                if *axis == 0 {
                    let mut start = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let len = pv.len();
                        let data = g.data()[start..start + len].to_vec();
                        accumulate(grads, p, Tensor::new(pv.shape().to_vec(), data)?);
                        start += len;
                    }
                } else {
                    let mut offset = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let pc = pv.cols();
                        let mut data = Vec::with_capacity(pv.len());
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row(r)[offset..offset + pc]);
                        }
                        accumulate(grads, p, Tensor::new(pv.shape().to_vec(), data)?);
                        offset += pc;
                    }
                }
            }
            Op::LeakyRelu { a, slope } => {
                let d = g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { slope * x });
                accumulate(grads, *a, d);
            }
            Op::Relu(a) => {
                let d = g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 });
                accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                accumulate(grads, *a, g.zip_map(out, |x, y| x * y * (1.0 - y)));
            }
            Op::RowDot(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut ga = bv.clone();
                let mut gb = av.clone();
                for r in 0..av.rows() {
                    let k = g.data()[r];
                    ga.row_mut(r).iter_mut().for_each(|x| *x *= k);
                    gb.row_mut(r).iter_mut().for_each(|x| *x *= k);
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::SegmentSoftmax { a, segments } => {
                let y = out.data();
                let n_seg = segments.iter().copied().max().unwrap_or(0) + 1;
                let mut dot = vec![0.0; n_seg];
                for ((&gi, &yi), &s) in g.data().iter().zip(y).zip(segments) {
                    dot[s] += gi * yi;
                }
                let data = g
                    .data()
                    .iter()
                    .zip(y)
                    .zip(segments)
                    .map(|((&gi, &yi), &s)| yi * (gi - dot[s]))
                    .collect();
                accumulate(grads, *a, Tensor::new(out.shape().to_vec(), data)?);
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                let k = g.data()[0] / av.len() as f64;
                accumulate(grads, *a, Tensor::full(av.shape(), k));
            }
            Op::Bce { logits, labels } => {
                let lv = self.value(*logits);
                let k = g.data()[0] / lv.len() as f64;
                accumulate(grads, *logits, lv.zip_map(labels, |x, y| k * (sigmoid(x) - y)));
            }
            Op::Dropout { a, mask } => {
                accumulate(grads, *a, g.zip_map(mask, |x, m| x * m));
            }
            Op::Gather { a, idx } => {
                let av = self.value(*a);
                let mut ga = Tensor::zeros(av.shape());
                for (k, &r) in idx.iter().enumerate() {
                    ga.row_mut(r)
                        .iter_mut()
                        .zip(g.row(k))
                        .for_each(|(d, s)| *d += s);
                }
                accumulate(grads, *a, ga);
            }
            Op::ScatterAdd { a, idx } => {
                let av = self.value(*a);
                let mut data = Vec::with_capacity(av.len());
                for &t in idx {
                    data.extend_from_slice(g.row(t));
                }
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), data)?);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x).data(), &[6.0]);
    }

    #[test]
    fn matvec_sum_gradient_is_column_sums() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let x = t.leaf(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        let ax = t.matmul(a, x).unwrap();
        let m = t.mean(ax);
        let loss = t.scale(m, 2.0);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(x).data(), &[4.0, 6.0]);
    }

    #[test]
    fn unreachable_leaf_gets_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(2.0));
        let unused = t.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let y = t.scale(x, 3.0);
        let g = t.backward(y).unwrap();
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused).data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn scatter_one_to_one_is_exact_copy() {
        let mut t = Tape::new();
        let x = t
            .leaf(Tensor::matrix(2, 2, vec![-0.0, 1.5, f64::MIN_POSITIVE, -3.0]).unwrap());
        let s = t.scatter_add_rows(x, &[1, 0], 3).unwrap();
        let v = t.value(s);
        assert_eq!(v.row(1)[0].to_bits(), (-0.0f64).to_bits());
        assert_eq!(v.row(0), &[f64::MIN_POSITIVE, -3.0]);
        assert_eq!(v.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn bce_gradient_matches_sigmoid_minus_label() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![0.0, 2.0]).unwrap());
        let l = t
            .bce_with_logits(x, Tensor::vector(vec![1.0, 0.0]).unwrap())
            .unwrap();
        let g = t.backward(l).unwrap().wrt(x);
        assert_abs_diff_eq!(g.data()[0], -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g.data()[1], sigmoid(2.0) / 2.0, epsilon = 1e-15);
    }
}
