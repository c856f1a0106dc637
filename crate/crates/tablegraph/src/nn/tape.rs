//! Eager op recording with reverse-mode differentiation.
//!
//! Each op computes its output immediately and appends a node; node ids are
//! therefore already in topological order and `backward` is a single reverse
//! sweep. Index-valued inputs (gather indices, pair samples, kNN neighbors)
//! enter as plain data and are not differentiated through.
//!
//! Every op output is checked for NaN/Inf; reductions use fixed iteration
//! order so identical inputs give bitwise-identical results.

use std::collections::BTreeMap;

use super::element::Element;
use super::tensor::Tensor;
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

enum Op<E: Element> {
    Input,
    Param { name: String },
    Add,
    Sub,
    Mul,
    Scale { factor: E },
    Exp,
    Relu,
    MatMul,
    AddBias,
    Im2Col(Im2ColSpec),
    MaxPool2 { argmax: Vec<usize> },
    ConcatCols { widths: Vec<usize> },
    GatherRows { indices: Vec<usize>, in_rows: usize },
    Reshape,
    ReduceSumAxis { axis: usize },
    ReduceMaxAxis { axis: usize, argmax: Vec<usize> },
    ReduceMeanAll,
    ScaleRows,
    SoftmaxXentMean { labels: Vec<usize>, probs: Vec<E> },
}

impl<E: Element> Op<E> {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param { .. } => "param",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale { .. } => "scale",
            Op::Exp => "exp",
            Op::Relu => "relu",
            Op::MatMul => "matmul",
            Op::AddBias => "add_bias",
            Op::Im2Col(_) => "im2col",
            Op::MaxPool2 { .. } => "max_pool",
            Op::ConcatCols { .. } => "concat",
            Op::GatherRows { .. } => "gather_rows",
            Op::Reshape => "reshape",
            Op::ReduceSumAxis { .. } => "reduce_sum",
            Op::ReduceMaxAxis { .. } => "reduce_max",
            Op::ReduceMeanAll => "reduce_mean",
            Op::ScaleRows => "scale_rows",
            Op::SoftmaxXentMean { .. } => "softmax_xent",
        }
    }
}

#[derive(Clone, Debug)]
struct Im2ColSpec {
    in_h: usize,
    in_w: usize,
    channels: usize,
    kernel: usize,
    stride: usize,
    out_h: usize,
    out_w: usize,
}

struct Node<E: Element> {
    op: Op<E>,
    inputs: Vec<NodeId>,
    value: Tensor<E>,
}

/// Gradients keyed by parameter name; parameters on the tape that the loss
/// does not reach get explicit zeros.
pub struct Gradients<E: Element> {
    pub by_name: BTreeMap<String, Tensor<E>>,
}

impl<E: Element> Gradients<E> {
    pub fn get(&self, name: &str) -> Option<&Tensor<E>> {
        self.by_name.get(name)
    }
}

pub struct Tape<E: Element> {
    nodes: Vec<Node<E>>,
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> Tape<E> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<E> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<E>, inputs: Vec<NodeId>, value: Tensor<E>) -> Result<NodeId, NnError> {
        if !value.all_finite() {
            return Err(NnError::NonFinite { op: op.name() });
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, value });
        Ok(id)
    }

    pub fn input(&mut self, value: Tensor<E>) -> Result<NodeId, NnError> {
        self.push(Op::Input, vec![], value)
    }

    pub fn param(&mut self, name: impl Into<String>, value: Tensor<E>) -> Result<NodeId, NnError> {
        self.push(Op::Param { name: name.into() }, vec![], value)
    }

    // -- elementwise ------------------------------------------------------

    fn binary_same_shape(
        &mut self,
        op: Op<E>,
        a: NodeId,
        b: NodeId,
        f: impl Fn(E, E) -> E,
    ) -> Result<NodeId, NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(NnError::ShapeMismatch {
                op: op.name(),
                detail: format!("{:?} vs {:?}", va.shape(), vb.shape()),
            });
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::from_vec(va.shape(), data)?;
        self.push(op, vec![a, b], value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.binary_same_shape(Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.binary_same_shape(Op::Sub, a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.binary_same_shape(Op::Mul, a, b, |x, y| x * y)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, NnError> {
        let c = E::from_f64(factor);
        let value = Tensor::from_vec(
            self.value(a).shape(),
            self.value(a).data().iter().map(|&x| x * c).collect(),
        )?;
        self.push(Op::Scale { factor: c }, vec![a], value)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId, NnError> {
        let value = Tensor::from_vec(
            self.value(a).shape(),
            self.value(a).data().iter().map(|&x| x.exp()).collect(),
        )?;
        self.push(Op::Exp, vec![a], value)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, NnError> {
        let value = Tensor::from_vec(
            self.value(a).shape(),
            self.value(a)
                .data()
                .iter()
                .map(|&x| x.max_with(E::ZERO))
                .collect(),
        )?;
        self.push(Op::Relu, vec![a], value)
    }

    // -- linear algebra ---------------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        let (sa, sb) = (va.shape(), vb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(NnError::ShapeMismatch {
                op: "matmul",
                detail: format!("{sa:?} x {sb:?}"),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = mm_nn(va.data(), vb.data(), m, k, n);
        let value = Tensor::from_vec(&[m, n], data)?;
        self.push(Op::MatMul, vec![a, b], value)
    }

    /// `a` is `[rows, c]`, `bias` is `[c]`, broadcast over rows.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, NnError> {
        let (va, vb) = (self.value(a), self.value(bias));
        if va.rank() != 2 || vb.rank() != 1 || va.shape()[1] != vb.shape()[0] {
            return Err(NnError::ShapeMismatch {
                op: "add_bias",
                detail: format!("{:?} + {:?}", va.shape(), vb.shape()),
            });
        }
        let c = vb.shape()[0];
        let mut data = va.data().to_vec();
        for row in data.chunks_exact_mut(c) {
            for (d, &b) in row.iter_mut().zip(vb.data()) {
                *d += b;
            }
        }
        let value = Tensor::from_vec(va.shape(), data)?;
        self.push(Op::AddBias, vec![a, bias], value)
    }

    /// Fully-connected layer: `x [n, in] * w [in, out] + b [out]`.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let h = self.matmul(x, w)?;
        self.add_bias(h, b)
    }

    // -- convolution ------------------------------------------------------

    /// Extracts zero-padded `kernel x kernel` patches: `[h, w, c]` becomes
    /// `[out_h * out_w, kernel * kernel * c]` with `out = ceil(dim / stride)`.
    pub fn im2col(&mut self, x: NodeId, kernel: usize, stride: usize) -> Result<NodeId, NnError> {
        let vx = self.value(x);
        if vx.rank() != 3 || kernel % 2 == 0 || stride == 0 {
            return Err(NnError::ShapeMismatch {
                op: "im2col",
                detail: format!(
                    "input {:?}, kernel {kernel}, stride {stride} (rank-3 input, odd kernel required)",
                    vx.shape()
                ),
            });
        }
        let (h, w, c) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let spec = Im2ColSpec {
            in_h: h,
            in_w: w,
            channels: c,
            kernel,
            stride,
            out_h: (h - 1) / stride + 1,
            out_w: (w - 1) / stride + 1,
        };
        let value = im2col_forward(vx.data(), &spec)?;
        self.push(Op::Im2Col(spec), vec![x], value)
    }

    /// 2-D convolution with zero padding keeping `out = ceil(in / stride)`.
    /// `x` is `[h, w, cin]`, `w` is `[k, k, cin, cout]`, `b` is `[cout]`.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        weights: NodeId,
        bias: NodeId,
        stride: usize,
    ) -> Result<NodeId, NnError> {
        let ws = self.value(weights).shape().to_vec();
        let xs = self.value(x).shape().to_vec();
        if ws.len() != 4 || ws[0] != ws[1] || xs.len() != 3 || ws[2] != xs[2] {
            return Err(NnError::ShapeMismatch {
                op: "conv2d",
                detail: format!("input {xs:?}, weights {ws:?}"),
            });
        }
        let (kernel, cin, cout) = (ws[0], ws[2], ws[3]);
        let cols = self.im2col(x, kernel, stride)?;
        let w2 = self.reshape(weights, &[kernel * kernel * cin, cout])?;
        let flat = self.matmul(cols, w2)?;
        let biased = self.add_bias(flat, bias)?;
        let (oh, ow) = (
            (xs[0] - 1) / stride + 1,
            (xs[1] - 1) / stride + 1,
        );
        self.reshape(biased, &[oh, ow, cout])
    }

    /// 2x2 max pooling with stride 2; trailing odd row/column is dropped.
    pub fn max_pool2(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let vx = self.value(x);
        if vx.rank() != 3 {
            return Err(NnError::ShapeMismatch {
                op: "max_pool",
                detail: format!("rank-3 input required, got {:?}", vx.shape()),
            });
        }
        let (h, w, c) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(NnError::ShapeMismatch {
                op: "max_pool",
                detail: format!("input {:?} too small for 2x2 pooling", vx.shape()),
            });
        }
        let data = vx.data();
        let mut out = vec![E::ZERO; oh * ow * c];
        let mut argmax = vec![0usize; oh * ow * c];
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best_idx = (2 * oy * w + 2 * ox) * c + ch;
                    let mut best = data[best_idx];
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                            if data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = (oy * ow + ox) * c + ch;
                    out[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        let value = Tensor::from_vec(&[oh, ow, c], out)?;
        self.push(Op::MaxPool2 { argmax }, vec![x], value)
    }

    // -- shape / indexing -------------------------------------------------

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, NnError> {
        let value = self.value(x).clone().reshaped(shape)?;
        self.push(Op::Reshape, vec![x], value)
    }

    /// Concatenates rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NnError> {
        if parts.is_empty() {
            return Err(NnError::ShapeMismatch {
                op: "concat",
                detail: "no inputs".into(),
            });
        }
        let rows = self.value(parts[0]).shape().first().copied().unwrap_or(0);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 2 || s[0] != rows {
                return Err(NnError::ShapeMismatch {
                    op: "concat",
                    detail: format!("expected [{rows}, _], got {s:?}"),
                });
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![E::ZERO; rows * total];
        let mut offset = 0;
        for (&p, &wi) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                data[r * total + offset..r * total + offset + wi]
                    .copy_from_slice(&src[r * wi..(r + 1) * wi]);
            }
            offset += wi;
        }
        let value = Tensor::from_vec(&[rows, total], data)?;
        self.push(Op::ConcatCols { widths }, parts.to_vec(), value)
    }

    /// Selects rows of a rank-2 tensor; repeated indices are fine (used both
    /// for the spatial feature gather and for pair lookups).
    pub fn gather_rows(&mut self, x: NodeId, indices: &[usize]) -> Result<NodeId, NnError> {
        let vx = self.value(x);
        if vx.rank() != 2 {
            return Err(NnError::ShapeMismatch {
                op: "gather_rows",
                detail: format!("rank-2 input required, got {:?}", vx.shape()),
            });
        }
        let (n, c) = (vx.shape()[0], vx.shape()[1]);
        for &i in indices {
            if i >= n {
                return Err(NnError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    len: n,
                });
            }
        }
        let src = vx.data();
        let mut data = vec![E::ZERO; indices.len() * c];
        for (r, &i) in indices.iter().enumerate() {
            data[r * c..(r + 1) * c].copy_from_slice(&src[i * c..(i + 1) * c]);
        }
        let value = Tensor::from_vec(&[indices.len(), c], data)?;
        self.push(
            Op::GatherRows {
                indices: indices.to_vec(),
                in_rows: n,
            },
            vec![x],
            value,
        )
    }

    // -- reductions -------------------------------------------------------

    pub fn reduce_sum_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId, NnError> {
        let (outer, mid, inner, out_shape) = axis_split(self.value(x).shape(), axis, "reduce_sum")?;
        let src = self.value(x).data();
        let mut out = vec![E::ZERO; outer * inner];
        for o in 0..outer {
            for m in 0..mid {
                let base = (o * mid + m) * inner;
                let dst = &mut out[o * inner..(o + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(&src[base..base + inner]) {
                    *d += s;
                }
            }
        }
        let value = Tensor::from_vec(&out_shape, out)?;
        self.push(Op::ReduceSumAxis { axis }, vec![x], value)
    }

    pub fn reduce_mean_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId, NnError> {
        let mid = *self
            .value(x)
            .shape()
            .get(axis)
            .ok_or_else(|| NnError::ShapeMismatch {
                op: "reduce_mean",
                detail: format!("axis {axis} out of range for {:?}", self.value(x).shape()),
            })?;
        let s = self.reduce_sum_axis(x, axis)?;
        self.scale(s, 1.0 / mid as f64)
    }

    /// Max along an axis; ties resolve to the lowest index.
    pub fn reduce_max_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId, NnError> {
        let (outer, mid, inner, out_shape) = axis_split(self.value(x).shape(), axis, "reduce_max")?;
        if mid == 0 {
            return Err(NnError::ShapeMismatch {
                op: "reduce_max",
                detail: "cannot reduce over empty axis".into(),
            });
        }
        let src = self.value(x).data();
        let mut out = vec![E::ZERO; outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = src[o * mid * inner + i];
                let mut best_m = 0;
                for m in 1..mid {
                    let v = src[(o * mid + m) * inner + i];
                    if v > best {
                        best = v;
                        best_m = m;
                    }
                }
                out[o * inner + i] = best;
                argmax[o * inner + i] = best_m;
            }
        }
        let value = Tensor::from_vec(&out_shape, out)?;
        self.push(Op::ReduceMaxAxis { axis, argmax }, vec![x], value)
    }

    pub fn reduce_mean_all(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let vx = self.value(x);
        let n = vx.numel();
        if n == 0 {
            return Err(NnError::ShapeMismatch {
                op: "reduce_mean",
                detail: "empty tensor".into(),
            });
        }
        let mut acc = E::ZERO;
        for &v in vx.data() {
            acc += v;
        }
        let value = Tensor::scalar(acc * E::from_f64(1.0 / n as f64));
        self.push(Op::ReduceMeanAll, vec![x], value)
    }

    /// Scales row `i` of `x [n, c]` by `s[i]`.
    pub fn scale_rows(&mut self, x: NodeId, s: NodeId) -> Result<NodeId, NnError> {
        let (vx, vs) = (self.value(x), self.value(s));
        if vx.rank() != 2 || vs.rank() != 1 || vx.shape()[0] != vs.shape()[0] {
            return Err(NnError::ShapeMismatch {
                op: "scale_rows",
                detail: format!("{:?} scaled by {:?}", vx.shape(), vs.shape()),
            });
        }
        let c = vx.shape()[1];
        let mut data = vx.data().to_vec();
        for (row, &f) in data.chunks_exact_mut(c).zip(vs.data()) {
            for d in row {
                *d *= f;
            }
        }
        let value = Tensor::from_vec(vx.shape(), data)?;
        self.push(Op::ScaleRows, vec![x, s], value)
    }

    // -- loss -------------------------------------------------------------

    /// Mean softmax cross-entropy of `logits [n, classes]` against integer
    /// labels. Row-wise max subtraction keeps the exponentials bounded.
    pub fn softmax_xent_mean(
        &mut self,
        logits: NodeId,
        labels: &[usize],
    ) -> Result<NodeId, NnError> {
        let vl = self.value(logits);
        if vl.rank() != 2 || vl.shape()[0] != labels.len() {
            return Err(NnError::ShapeMismatch {
                op: "softmax_xent",
                detail: format!("logits {:?} vs {} labels", vl.shape(), labels.len()),
            });
        }
        let (n, classes) = (vl.shape()[0], vl.shape()[1]);
        for &l in labels {
            if l >= classes {
                return Err(NnError::IndexOutOfRange {
                    op: "softmax_xent",
                    index: l,
                    len: classes,
                });
            }
        }
        let src = vl.data();
        let mut probs = vec![E::ZERO; n * classes];
        let mut loss = E::ZERO;
        for (r, &label) in labels.iter().enumerate() {
            let row = &src[r * classes..(r + 1) * classes];
            let mut m = row[0];
            for &v in &row[1..] {
                m = m.max_with(v);
            }
            let mut denom = E::ZERO;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - m).exp();
                probs[r * classes + j] = e;
                denom += e;
            }
            let inv = E::ONE / denom;
            for p in &mut probs[r * classes..(r + 1) * classes] {
                *p *= inv;
            }
            loss += -(probs[r * classes + label].ln());
        }
        let value = Tensor::scalar(loss * E::from_f64(1.0 / n as f64));
        self.push(
            Op::SoftmaxXentMean {
                labels: labels.to_vec(),
                probs,
            },
            vec![logits],
            value,
        )
    }

    // -- backward ---------------------------------------------------------

    /// Reverse sweep from a scalar loss. Returns gradients for every named
    /// parameter on the tape (zeros for parameters the loss does not reach).
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<E>, NnError> {
        if self.value(loss).numel() != 1 {
            return Err(NnError::ShapeMismatch {
                op: "backward",
                detail: format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            });
        }
        let mut grads: Vec<Option<Tensor<E>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), E::ONE));

        for id in (0..=loss.0).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {}
                Op::Param { .. } => {
                    // Re-store so parameter grads survive the sweep.
                    grads[id] = Some(grad);
                    continue;
                }
                Op::Add => {
                    accumulate(&mut grads[node.inputs[0].0], grad.clone());
                    accumulate(&mut grads[node.inputs[1].0], grad);
                }
                Op::Sub => {
                    accumulate(&mut grads[node.inputs[0].0], grad.clone());
                    let neg = Tensor::from_vec(
                        grad.shape(),
                        grad.data().iter().map(|&g| -g).collect(),
                    )?;
                    accumulate(&mut grads[node.inputs[1].0], neg);
                }
                Op::Mul => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    let ga = zip_map(&grad, self.value(b), |g, y| g * y)?;
                    let gb = zip_map(&grad, self.value(a), |g, x| g * x)?;
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Scale { factor } => {
                    let f = *factor;
                    let ga = Tensor::from_vec(
                        grad.shape(),
                        grad.data().iter().map(|&g| g * f).collect(),
                    )?;
                    accumulate(&mut grads[node.inputs[0].0], ga);
                }
                Op::Exp => {
                    let ga = zip_map(&grad, &node.value, |g, y| g * y)?;
                    accumulate(&mut grads[node.inputs[0].0], ga);
                }
                Op::Relu => {
                    let x = self.value(node.inputs[0]);
                    let ga = zip_map(&grad, x, |g, xv| if xv > E::ZERO { g } else { E::ZERO })?;
                    accumulate(&mut grads[node.inputs[0].0], ga);
                }
                Op::MatMul => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    let (va, vb) = (self.value(a), self.value(b));
                    let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                    let ga = Tensor::from_vec(&[m, k], mm_nt(grad.data(), vb.data(), m, n, k))?;
                    let gb = Tensor::from_vec(&[k, n], mm_tn(va.data(), grad.data(), m, k, n))?;
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::AddBias => {
                    let c = self.value(node.inputs[1]).shape()[0];
                    let mut db = vec![E::ZERO; c];
                    for row in grad.data().chunks_exact(c) {
                        for (d, &g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    accumulate(&mut grads[node.inputs[0].0], grad);
                    accumulate(&mut grads[node.inputs[1].0], Tensor::from_vec(&[c], db)?);
                }
                Op::Im2Col(spec) => {
                    let dx = im2col_backward(grad.data(), spec);
                    accumulate(
                        &mut grads[node.inputs[0].0],
                        Tensor::from_vec(&[spec.in_h, spec.in_w, spec.channels], dx)?,
                    );
                }
                Op::MaxPool2 { argmax } => {
                    let x = self.value(node.inputs[0]);
                    let mut dx = vec![E::ZERO; x.numel()];
                    for (&src_idx, &g) in argmax.iter().zip(grad.data()) {
                        dx[src_idx] += g;
                    }
                    accumulate(&mut grads[node.inputs[0].0], Tensor::from_vec(x.shape(), dx)?);
                }
                Op::ConcatCols { widths } => {
                    let rows = node.value.shape()[0];
                    let total = node.value.shape()[1];
                    let mut offset = 0;
                    for (slot, &wi) in node.inputs.iter().zip(widths) {
                        let mut part = vec![E::ZERO; rows * wi];
                        for r in 0..rows {
                            part[r * wi..(r + 1) * wi].copy_from_slice(
                                &grad.data()[r * total + offset..r * total + offset + wi],
                            );
                        }
                        accumulate(&mut grads[slot.0], Tensor::from_vec(&[rows, wi], part)?);
                        offset += wi;
                    }
                }
                Op::GatherRows { indices, in_rows } => {
                    let c = node.value.shape()[1];
                    let mut dx = vec![E::ZERO; in_rows * c];
                    for (r, &i) in indices.iter().enumerate() {
                        let src = &grad.data()[r * c..(r + 1) * c];
                        let dst = &mut dx[i * c..(i + 1) * c];
                        for (d, &g) in dst.iter_mut().zip(src) {
                            *d += g;
                        }
                    }
                    accumulate(
                        &mut grads[node.inputs[0].0],
                        Tensor::from_vec(&[*in_rows, c], dx)?,
                    );
                }
                Op::Reshape => {
                    let src_shape = self.value(node.inputs[0]).shape().to_vec();
                    accumulate(&mut grads[node.inputs[0].0], grad.reshaped(&src_shape)?);
                }
                Op::ReduceSumAxis { axis } => {
                    let x = self.value(node.inputs[0]);
                    let (outer, mid, inner, _) = axis_split(x.shape(), *axis, "reduce_sum")?;
                    let mut dx = vec![E::ZERO; x.numel()];
                    for o in 0..outer {
                        let g = &grad.data()[o * inner..(o + 1) * inner];
                        for m in 0..mid {
                            let base = (o * mid + m) * inner;
                            dx[base..base + inner].copy_from_slice(g);
                        }
                    }
                    accumulate(&mut grads[node.inputs[0].0], Tensor::from_vec(x.shape(), dx)?);
                }
                Op::ReduceMaxAxis { axis, argmax } => {
                    let x = self.value(node.inputs[0]);
                    let (outer, mid, inner, _) = axis_split(x.shape(), *axis, "reduce_max")?;
                    let mut dx = vec![E::ZERO; x.numel()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let m = argmax[o * inner + i];
                            dx[(o * mid + m) * inner + i] += grad.data()[o * inner + i];
                        }
                    }
                    accumulate(&mut grads[node.inputs[0].0], Tensor::from_vec(x.shape(), dx)?);
                }
                Op::ReduceMeanAll => {
                    let x = self.value(node.inputs[0]);
                    let g = grad.item() * E::from_f64(1.0 / x.numel() as f64);
                    accumulate(&mut grads[node.inputs[0].0], Tensor::filled(x.shape(), g));
                }
                Op::ScaleRows => {
                    let (x, s) = (node.inputs[0], node.inputs[1]);
                    let (vx, vs) = (self.value(x), self.value(s));
                    let c = vx.shape()[1];
                    let mut dx = vec![E::ZERO; vx.numel()];
                    let mut ds = vec![E::ZERO; vs.numel()];
                    for (r, &f) in vs.data().iter().enumerate() {
                        let g = &grad.data()[r * c..(r + 1) * c];
                        let xv = &vx.data()[r * c..(r + 1) * c];
                        let d = &mut dx[r * c..(r + 1) * c];
                        let mut acc = E::ZERO;
                        for i in 0..c {
                            d[i] = g[i] * f;
                            acc += g[i] * xv[i];
                        }
                        ds[r] = acc;
                    }
                    accumulate(&mut grads[x.0], Tensor::from_vec(vx.shape(), dx)?);
                    accumulate(&mut grads[s.0], Tensor::from_vec(vs.shape(), ds)?);
                }
                Op::SoftmaxXentMean { labels, probs } => {
                    let shape = self.value(node.inputs[0]).shape().to_vec();
                    let (n, classes) = (shape[0], shape[1]);
                    let g = grad.item() * E::from_f64(1.0 / n as f64);
                    let mut dl = vec![E::ZERO; n * classes];
                    for (r, &label) in labels.iter().enumerate() {
                        for j in 0..classes {
                            let y = if j == label { E::ONE } else { E::ZERO };
                            dl[r * classes + j] = (probs[r * classes + j] - y) * g;
                        }
                    }
                    accumulate(&mut grads[node.inputs[0].0], Tensor::from_vec(&shape, dl)?);
                }
            }
        }

        let mut by_name = BTreeMap::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Param { name } = &node.op {
                let g = grads[id]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                if !g.all_finite() {
                    return Err(NnError::NonFinite { op: "backward" });
                }
                by_name.insert(name.clone(), g);
            }
        }
        Ok(Gradients { by_name })
    }
}

fn accumulate<E: Element>(slot: &mut Option<Tensor<E>>, delta: Tensor<E>) {
    match slot {
        None => *slot = Some(delta),
        Some(t) => {
            debug_assert_eq!(t.shape(), delta.shape());
            for (d, &s) in t.data_mut().iter_mut().zip(delta.data()) {
                *d += s;
            }
        }
    }
}

fn zip_map<E: Element>(
    a: &Tensor<E>,
    b: &Tensor<E>,
    f: impl Fn(E, E) -> E,
) -> Result<Tensor<E>, NnError> {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::from_vec(
        a.shape(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

fn axis_split(
    shape: &[usize],
    axis: usize,
    op: &'static str,
) -> Result<(usize, usize, usize, Vec<usize>), NnError> {
    if axis >= shape.len() {
        return Err(NnError::ShapeMismatch {
            op,
            detail: format!("axis {axis} out of range for {shape:?}"),
        });
    }
    let outer: usize = shape[..axis].iter().product();
    let mid = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out_shape: Vec<usize> = shape[..axis].to_vec();
    out_shape.extend_from_slice(&shape[axis + 1..]);
    if out_shape.is_empty() {
        out_shape.push(1);
    }
    Ok((outer, mid, inner, out_shape))
}

// -- matmul kernels -------------------------------------------------------

/// `C[m,n] = A[m,k] * B[k,n]`.
fn mm_nn<E: Element>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    let mut c = vec![E::ZERO; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
    c
}

/// `C[m,k] = A[m,n] * B[k,n]^T`.
fn mm_nt<E: Element>(a: &[E], b: &[E], m: usize, n: usize, k: usize) -> Vec<E> {
    let mut c = vec![E::ZERO; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        let crow = &mut c[i * k..(i + 1) * k];
        for (kk, cv) in crow.iter_mut().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            let mut acc = E::ZERO;
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            *cv = acc;
        }
    }
    c
}

/// `C[k,n] = A[m,k]^T * B[m,n]`.
fn mm_tn<E: Element>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    let mut c = vec![E::ZERO; k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            let crow = &mut c[kk * n..(kk + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
    c
}

fn im2col_forward<E: Element>(src: &[E], spec: &Im2ColSpec) -> Result<Tensor<E>, NnError> {
    let Im2ColSpec {
        in_h,
        in_w,
        channels: c,
        kernel,
        stride,
        out_h,
        out_w,
    } = *spec;
    let pad = (kernel - 1) / 2;
    let patch = kernel * kernel * c;
    let mut out = vec![E::ZERO; out_h * out_w * patch];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let row_base = (oy * out_w + ox) * patch;
            for ky in 0..kernel {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= in_h as isize {
                    continue;
                }
                for kx in 0..kernel {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= in_w as isize {
                        continue;
                    }
                    let src_base = (iy as usize * in_w + ix as usize) * c;
                    let dst_base = row_base + (ky * kernel + kx) * c;
                    out[dst_base..dst_base + c].copy_from_slice(&src[src_base..src_base + c]);
                }
            }
        }
    }
    Tensor::from_vec(&[out_h * out_w, patch], out)
}

fn im2col_backward<E: Element>(grad: &[E], spec: &Im2ColSpec) -> Vec<E> {
    let Im2ColSpec {
        in_h,
        in_w,
        channels: c,
        kernel,
        stride,
        out_h,
        out_w,
    } = *spec;
    let pad = (kernel - 1) / 2;
    let patch = kernel * kernel * c;
    let mut dx = vec![E::ZERO; in_h * in_w * c];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let row_base = (oy * out_w + ox) * patch;
            for ky in 0..kernel {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= in_h as isize {
                    continue;
                }
                for kx in 0..kernel {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= in_w as isize {
                        continue;
                    }
                    let dst_base = (iy as usize * in_w + ix as usize) * c;
                    let src_base = row_base + (ky * kernel + kx) * c;
                    for (d, &g) in dx[dst_base..dst_base + c]
                        .iter_mut()
                        .zip(&grad[src_base..src_base + c])
                    {
                        *d += g;
                    }
                }
            }
        }
    }
    dx
}
