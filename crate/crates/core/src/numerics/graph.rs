//! Reverse-mode automatic differentiation over a recording tape.
//!
//! Every op appends one node holding its forward value; [`Graph::backward`]
//! walks the tape in reverse exactly once. Binary elementwise ops broadcast
//! only along leading axes: the right operand's shape must be a suffix of
//! the left operand's shape, or a single element.

use std::borrow::Cow;

use super::tensor::{strides, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Bmm(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Softmax(NodeId),
    LayerNorm(NodeId, Vec<f64>),
    Gelu(NodeId),
    Sigmoid(NodeId),
    Transpose(NodeId, Vec<usize>),
    Reshape(NodeId),
    Concat(Vec<NodeId>, usize),
    Slice {
        x: NodeId,
        axis: usize,
        start: usize,
    },
    Resize {
        x: NodeId,
        axis: usize,
    },
    Expand {
        x: NodeId,
        axis: usize,
    },
    ReduceMean(NodeId),
    MseLoss {
        pred: NodeId,
        target: Vec<f64>,
        observed: Vec<bool>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node<'a> {
    op: Op,
    value: Cow<'a, Tensor>,
    needs_grad: bool,
}

/// Recording tape. Leaves may borrow their tensors for the graph lifetime.
#[derive(Debug, Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar with respect to every node that needed one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Cow<'a, Tensor>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn derived(&mut self, op: Op, value: Tensor, inputs: &[NodeId]) -> NodeId {
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.push(op, Cow::Owned(value), needs_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, Cow::Owned(value), false)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor) -> NodeId {
        self.push(Op::Leaf, Cow::Borrowed(value), false)
    }

    /// Differentiable leaf borrowing its storage.
    pub fn param(&mut self, value: &'a Tensor) -> NodeId {
        self.push(Op::Leaf, Cow::Borrowed(value), true)
    }

    pub fn param_owned(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, Cow::Owned(value), true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// `a [..., m, k] x b [k, n] -> [..., m, n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (k, n) = (sb[0], sb[1]);
        let rows = self.value(a).numel() / k;
        let mut out = vec![0.0; rows * n];
        mm_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            rows,
            k,
            n,
        );
        let mut shape = sa;
        *shape.last_mut().unwrap() = n;
        Ok(self.derived(Op::Matmul(a, b), Tensor::from_parts(shape, out), &[a, b]))
    }

    /// Batched `a [B, m, k] x b [B, k, n] -> [B, m, n]`.
    pub fn bmm(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("bmm", format!("{sa:?} x {sb:?}")));
        }
        let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; batch * m * n];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        for bi in 0..batch {
            mm_acc(
                &av[bi * m * k..(bi + 1) * m * k],
                &bv[bi * k * n..(bi + 1) * k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        Ok(self.derived(
            Op::Bmm(a, b),
            Tensor::from_parts(vec![batch, m, n], out),
            &[a, b],
        ))
    }

    fn check_broadcast(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let suffix = sb.len() <= sa.len() && sa[sa.len() - sb.len()..] == *sb;
        if suffix || self.value(b).numel() == 1 {
            Ok(())
        } else {
            Err(Error::shape(
                op,
                format!("cannot broadcast {sb:?} onto {sa:?}"),
            ))
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_broadcast("add", a, b)?;
        let bv = self.value(b).data();
        let nb = bv.len();
        let av = self.value(a);
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + bv[i % nb])
            .collect();
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        Ok(self.derived(Op::Add(a, b), out, &[a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_broadcast("mul", a, b)?;
        let bv = self.value(b).data();
        let nb = bv.len();
        let av = self.value(a);
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x * bv[i % nb])
            .collect();
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        Ok(self.derived(Op::Mul(a, b), out, &[a, b]))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let av = self.value(a);
        let out = Tensor::from_parts(
            av.shape().to_vec(),
            av.data().iter().map(|x| x * factor).collect(),
        );
        self.derived(Op::Scale(a, factor), out, &[a])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let last = *av.shape().last().unwrap_or(&1);
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(last) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        self.derived(Op::Softmax(a), out, &[a])
    }

    /// Normalise the last axis to zero mean, unit variance (no affine part).
    pub fn layer_norm(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let last = *av.shape().last().unwrap_or(&1);
        let mut data = av.data().to_vec();
        let mut inv_std = Vec::with_capacity(data.len() / last.max(1));
        for row in data.chunks_mut(last) {
            let mean = row.iter().sum::<f64>() / last as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / last as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * r;
            }
            inv_std.push(r);
        }
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        self.derived(Op::LayerNorm(a, inv_std), out, &[a])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let data = av
            .data()
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()))
            .collect();
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        self.derived(Op::Gelu(a), out, &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| sigmoid(x)).collect();
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        self.derived(Op::Sigmoid(a), out, &[a])
    }

    /// Permute axes: output axis `i` is input axis `perm[i]`.
    pub fn transpose(&mut self, a: NodeId, perm: &[usize]) -> Result<NodeId> {
        let shape = self.shape(a).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len()
            || perm
                .iter()
                .any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::shape(
                "transpose",
                format!("perm {perm:?} for shape {shape:?}"),
            ));
        }
        let out = permute(self.value(a), perm);
        Ok(self.derived(Op::Transpose(a, perm.to_vec()), out, &[a]))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let out = self.value(a).clone().reshaped(shape)?;
        Ok(self.derived(Op::Reshape(a), out, &[a]))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        let first = self
            .shape(
                *parts
                    .first()
                    .ok_or_else(|| Error::shape("concat", "no inputs"))?,
            )
            .to_vec();
        if axis >= first.len() {
            return Err(Error::shape(
                "concat",
                format!("axis {axis} for shape {first:?}"),
            ));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape(
                    "concat",
                    format!("{s:?} vs {first:?} on axis {axis}"),
                ));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let v = self.value(*p);
                let block = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        Ok(self.derived(
            Op::Concat(parts.to_vec(), axis),
            Tensor::from_parts(shape, data),
            parts,
        ))
    }

    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape(
                "slice",
                format!("[{start}, {}) on axis {axis} of {shape:?}", start + len),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        Ok(self.derived(
            Op::Slice { x: a, axis, start },
            Tensor::from_parts(out_shape, data),
            &[a],
        ))
    }

    /// Linear interpolation along `axis` to `new_len` points, endpoints aligned.
    pub fn linear_interp_resize(
        &mut self,
        a: NodeId,
        axis: usize,
        new_len: usize,
    ) -> Result<NodeId> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || new_len == 0 || shape[axis] == 0 {
            return Err(Error::shape(
                "linear_interp_resize",
                format!("axis {axis} of {shape:?} to {new_len}"),
            ));
        }
        let old = shape[axis];
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(a).data();
        let mut data = vec![0.0; outer * new_len * inner];
        for o in 0..outer {
            for i in 0..new_len {
                let (lo, hi, frac) = interp_coords(i, old, new_len);
                for j in 0..inner {
                    let x_lo = src[(o * old + lo) * inner + j];
                    let x_hi = src[(o * old + hi) * inner + j];
                    data[(o * new_len + i) * inner + j] = (1.0 - frac) * x_lo + frac * x_hi;
                }
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = new_len;
        Ok(self.derived(
            Op::Resize { x: a, axis },
            Tensor::from_parts(out_shape, data),
            &[a],
        ))
    }

    /// Repeat a size-1 axis `n` times.
    pub fn expand(&mut self, a: NodeId, axis: usize, n: usize) -> Result<NodeId> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || shape[axis] != 1 {
            return Err(Error::shape(
                "expand",
                format!("axis {axis} of {shape:?} must be 1"),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * n * inner);
        for o in 0..outer {
            for _ in 0..n {
                data.extend_from_slice(&src[o * inner..(o + 1) * inner]);
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = n;
        Ok(self.derived(
            Op::Expand { x: a, axis },
            Tensor::from_parts(out_shape, data),
            &[a],
        ))
    }

    pub fn reduce_mean(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let mean = av.data().iter().sum::<f64>() / av.numel().max(1) as f64;
        self.derived(Op::ReduceMean(a), Tensor::scalar(mean), &[a])
    }

    /// Mean squared error over cells where `observed` is true.
    pub fn mse_loss(&mut self, pred: NodeId, target: &[f64], observed: &[bool]) -> Result<NodeId> {
        let pv = self.value(pred);
        if target.len() != pv.numel() || observed.len() != pv.numel() {
            return Err(Error::shape(
                "mse_loss",
                format!(
                    "prediction has {} cells, target {}, mask {}",
                    pv.numel(),
                    target.len(),
                    observed.len()
                ),
            ));
        }
        let count = observed.iter().filter(|o| **o).count();
        if count == 0 {
            return Err(Error::UnusableWindow);
        }
        let sum: f64 = pv
            .data()
            .iter()
            .zip(target)
            .zip(observed)
            .filter(|(_, o)| **o)
            .map(|((p, t), _)| (p - t).powi(2))
            .sum();
        let op = Op::MseLoss {
            pred,
            target: target.to_vec(),
            observed: observed.to_vec(),
            count,
        };
        Ok(self.derived(op, Tensor::scalar(sum / count as f64), &[pred]))
    }

    /// Back-propagate from `root`, seeding its gradient with ones.
    pub fn backward(&self, root: NodeId) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.shape(root), 1.0));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backward_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (k, n) = (bv.shape()[0], bv.shape()[1]);
                let rows = av.numel() / k;
                if self.nodes[a.0].needs_grad {
                    // dA = G B^T
                    let mut da = vec![0.0; rows * k];
                    mm_bt_acc(g.data(), bv.data(), &mut da, rows, n, k);
                    self.accumulate(grads, *a, Tensor::from_parts(av.shape().to_vec(), da));
                }
                if self.nodes[b.0].needs_grad {
                    // dB = A^T G
                    let mut db = vec![0.0; k * n];
                    mm_at_acc(av.data(), g.data(), &mut db, rows, k, n);
                    self.accumulate(grads, *b, Tensor::from_parts(bv.shape().to_vec(), db));
                }
            }
            Op::Bmm(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (batch, m, k, n) = (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
                if self.nodes[a.0].needs_grad {
                    let mut da = vec![0.0; batch * m * k];
                    for bi in 0..batch {
                        mm_bt_acc(
                            &g.data()[bi * m * n..(bi + 1) * m * n],
                            &bv.data()[bi * k * n..(bi + 1) * k * n],
                            &mut da[bi * m * k..(bi + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                    self.accumulate(grads, *a, Tensor::from_parts(av.shape().to_vec(), da));
                }
                if self.nodes[b.0].needs_grad {
                    let mut db = vec![0.0; batch * k * n];
                    for bi in 0..batch {
                        mm_at_acc(
                            &av.data()[bi * m * k..(bi + 1) * m * k],
                            &g.data()[bi * m * n..(bi + 1) * m * n],
                            &mut db[bi * k * n..(bi + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                    self.accumulate(grads, *b, Tensor::from_parts(bv.shape().to_vec(), db));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.nodes[b.0].needs_grad {
                    let bv = self.value(*b);
                    let nb = bv.numel();
                    let mut db = vec![0.0; nb];
                    for (i, gi) in g.data().iter().enumerate() {
                        db[i % nb] += gi;
                    }
                    self.accumulate(grads, *b, Tensor::from_parts(bv.shape().to_vec(), db));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let nb = bv.numel();
                if self.nodes[a.0].needs_grad {
                    let da = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, gi)| gi * bv.data()[i % nb])
                        .collect();
                    self.accumulate(grads, *a, Tensor::from_parts(av.shape().to_vec(), da));
                }
                if self.nodes[b.0].needs_grad {
                    let mut db = vec![0.0; nb];
                    for (i, gi) in g.data().iter().enumerate() {
                        db[i % nb] += gi * av.data()[i];
                    }
                    self.accumulate(grads, *b, Tensor::from_parts(bv.shape().to_vec(), db));
                }
            }
            Op::Scale(a, factor) => {
                let da = g.data().iter().map(|x| x * factor).collect();
                self.accumulate(grads, *a, Tensor::from_parts(g.shape().to_vec(), da));
            }
            Op::Softmax(a) => {
                let last = *out.shape().last().unwrap_or(&1);
                let mut da = vec![0.0; g.numel()];
                for ((dx, y), gy) in da
                    .chunks_mut(last)
                    .zip(out.data().chunks(last))
                    .zip(g.data().chunks(last))
                {
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for j in 0..last {
                        dx[j] = y[j] * (gy[j] - dot);
                    }
                }
                self.accumulate(grads, *a, Tensor::from_parts(g.shape().to_vec(), da));
            }
            Op::LayerNorm(a, inv_std) => {
                let last = *out.shape().last().unwrap_or(&1);
                let nf = last as f64;
                let mut da = vec![0.0; g.numel()];
                for (r, ((dx, y), gy)) in da
                    .chunks_mut(last)
                    .zip(out.data().chunks(last))
                    .zip(g.data().chunks(last))
                    .enumerate()
                {
                    let mean_g = gy.iter().sum::<f64>() / nf;
                    let mean_gy = gy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / nf;
                    for j in 0..last {
                        dx[j] = inv_std[r] * (gy[j] - mean_g - y[j] * mean_gy);
                    }
                }
                self.accumulate(grads, *a, Tensor::from_parts(g.shape().to_vec(), da));
            }
            Op::Gelu(a) => {
                let xv = self.value(*a);
                let da = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&x, gi)| {
                        let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                        gi * (0.5 * (1.0 + t) + 0.5 * x * dt)
                    })
                    .collect();
                self.accumulate(grads, *a, Tensor::from_parts(g.shape().to_vec(), da));
            }
            Op::Sigmoid(a) => {
                let da = out
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(y, gi)| gi * y * (1.0 - y))
                    .collect();
                self.accumulate(grads, *a, Tensor::from_parts(g.shape().to_vec(), da));
            }
            Op::Transpose(a, perm) => {
                let mut inverse = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inverse[p] = i;
                }
                self.accumulate(grads, *a, permute(g, &inverse));
            }
            Op::Reshape(a) => {
                let shape = self.shape(*a).to_vec();
                self.accumulate(grads, *a, Tensor::from_parts(shape, g.data().to_vec()));
            }
            Op::Concat(parts, axis) => {
                let shape = out.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis];
                let mut offset = 0;
                for p in parts {
                    let ps = self.shape(*p).to_vec();
                    let len = ps[*axis];
                    if self.nodes[p.0].needs_grad {
                        let mut dp = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            dp.extend_from_slice(&g.data()[base..base + len * inner]);
                        }
                        self.accumulate(grads, *p, Tensor::from_parts(ps, dp));
                    }
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let shape = self.shape(*x).to_vec();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let len = out.shape()[*axis];
                let mut dx = vec![0.0; shape.iter().product()];
                for o in 0..outer {
                    let dst = (o * shape[*axis] + start) * inner;
                    let src = o * len * inner;
                    dx[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
                }
                self.accumulate(grads, *x, Tensor::from_parts(shape, dx));
            }
            Op::Resize { x, axis } => {
                let shape = self.shape(*x).to_vec();
                let old = shape[*axis];
                let new_len = out.shape()[*axis];
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let mut dx = vec![0.0; shape.iter().product()];
                for o in 0..outer {
                    for i in 0..new_len {
                        let (lo, hi, frac) = interp_coords(i, old, new_len);
                        for j in 0..inner {
                            let gi = g.data()[(o * new_len + i) * inner + j];
                            dx[(o * old + lo) * inner + j] += (1.0 - frac) * gi;
                            dx[(o * old + hi) * inner + j] += frac * gi;
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::from_parts(shape, dx));
            }
            Op::Expand { x, axis } => {
                let shape = self.shape(*x).to_vec();
                let n = out.shape()[*axis];
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let mut dx = vec![0.0; outer * inner];
                for o in 0..outer {
                    for r in 0..n {
                        let src = (o * n + r) * inner;
                        for j in 0..inner {
                            dx[o * inner + j] += g.data()[src + j];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::from_parts(shape, dx));
            }
            Op::ReduceMean(a) => {
                let shape = self.shape(*a).to_vec();
                let n: usize = shape.iter().product();
                let v = g.data()[0] / n as f64;
                self.accumulate(grads, *a, Tensor::full(&shape, v));
            }
            Op::MseLoss {
                pred,
                target,
                observed,
                count,
            } => {
                let pv = self.value(*pred);
                let scale = 2.0 * g.data()[0] / *count as f64;
                let dp = pv
                    .data()
                    .iter()
                    .zip(target)
                    .zip(observed)
                    .map(|((p, t), o)| if *o { scale * (p - t) } else { 0.0 })
                    .collect();
                self.accumulate(grads, *pred, Tensor::from_parts(pv.shape().to_vec(), dp));
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn interp_coords(i: usize, old: usize, new_len: usize) -> (usize, usize, f64) {
    if old == 1 || new_len == 1 {
        return (0, 0, 0.0);
    }
    let pos = i as f64 * (old - 1) as f64 / (new_len - 1) as f64;
    let lo = (pos.floor() as usize).min(old - 1);
    let hi = (lo + 1).min(old - 1);
    (lo, hi, pos - lo as f64)
}

fn permute(t: &Tensor, perm: &[usize]) -> Tensor {
    let in_shape = t.shape();
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n = t.numel();
    let mut data = Vec::with_capacity(n);
    let mut index = vec![0usize; out_shape.len()];
    let src = t.data();
    for _ in 0..n {
        let offset: usize = index.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        data.push(src[offset]);
        for ax in (0..index.len()).rev() {
            index[ax] += 1;
            if index[ax] < out_shape[ax] {
                break;
            }
            index[ax] = 0;
        }
    }
    Tensor::from_parts(out_shape, data)
}

/// `out[m,n] += a[m,k] b[k,n]`
fn mm_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out[m,k] += g[m,n] b[k,n]^T`
fn mm_bt_acc(g: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[k,n] += a[m,k]^T g[m,n]`
fn mm_at_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, gv) in orow.iter_mut().zip(grow) {
                *o += aip * gv;
            }
        }
    }
}
