//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every op applied during one forward pass. Nodes are
//! appended after their inputs, so walking the node list backwards is a
//! valid topological order for [`Graph::backward`].

use crate::kernels::{self, conv, conv::Conv2dCfg, norm, pool};
use crate::{ParamStore, Scalar, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Input,
    Param(usize),
    Conv2d { x: Var, w: Var, b: Option<Var>, cfg: Conv2dCfg },
    GroupNorm { x: Var, gamma: Var, beta: Var, groups: usize, saved: norm::Saved<T> },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Mul(Var, Var),
    MaxPool2 { x: Var, arg: Vec<u32> },
    AdaptiveAvgPool(Var),
    ResizeNearest(Var),
    Concat(Vec<Var>),
    Reshape(Var),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Softmax(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recorded computation for one forward pass.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    record: bool,
}

/// Gradients produced by [`Graph::backward`].
pub struct Grads<T> {
    params: Vec<Option<Tensor<T>>>,
    inputs: Vec<(Var, Tensor<T>)>,
}

impl<T: Scalar> Grads<T> {
    /// Gradient of parameter `i` of the store, `None` if it did not
    /// influence the output.
    pub fn param(&self, i: usize) -> Option<&Tensor<T>> {
        self.params.get(i).and_then(|g| g.as_ref())
    }

    pub fn params(&self) -> &[Option<Tensor<T>>] {
        &self.params
    }

    /// Gradient of an input registered with [`Graph::input_with_grad`].
    pub fn input(&self, v: Var) -> Option<&Tensor<T>> {
        self.inputs.iter().find(|(i, _)| *i == v).map(|(_, t)| t)
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    /// A graph that records ops for backpropagation.
    pub fn new() -> Self {
        Self { nodes: Vec::new(), record: true }
    }

    /// A graph for inference only; [`Graph::backward`] panics on it.
    pub fn inference() -> Self {
        Self { nodes: Vec::new(), record: false }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = self.record && inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        let op = if needs_grad { op } else { Op::Input };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Input, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Input whose gradient is reported by [`Grads::input`].
    pub fn input_with_grad(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Input, needs_grad: self.record });
        Var(self.nodes.len() - 1)
    }

    /// Places every parameter of `store` on the tape, in store order.
    pub fn params(&mut self, store: &ParamStore<T>) -> Vec<Var> {
        store
            .tensors()
            .enumerate()
            .map(|(i, t)| {
                self.nodes.push(Node {
                    value: t.clone(),
                    op: Op::Param(i),
                    needs_grad: self.record,
                });
                Var(self.nodes.len() - 1)
            })
            .collect()
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, cfg: Conv2dCfg) -> Var {
        let y = conv::forward(self.value(x), self.value(w), b.map(|b| self.value(b)), cfg);
        let mut ins = vec![x, w];
        ins.extend(b);
        self.push(y, Op::Conv2d { x, w, b, cfg }, &ins)
    }

    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Var {
        let (y, saved) = norm::forward(self.value(x), self.value(gamma), self.value(beta), groups);
        self.push(y, Op::GroupNorm { x, gamma, beta, groups, saved }, &[x, gamma, beta])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(y, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).map(kernels::sigmoid);
        self.push(y, Op::Sigmoid(x), &[x])
    }

    /// Broadcasting sum.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = kernels::add(self.value(a), self.value(b));
        self.push(y, Op::Add(a, b), &[a, b])
    }

    /// Broadcasting product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let y = kernels::mul(self.value(a), self.value(b));
        self.push(y, Op::Mul(a, b), &[a, b])
    }

    pub fn max_pool2(&mut self, x: Var) -> Var {
        let (y, arg) = pool::max_pool2(self.value(x));
        self.push(y, Op::MaxPool2 { x, arg }, &[x])
    }

    pub fn adaptive_avg_pool(&mut self, x: Var, oh: usize, ow: usize) -> Var {
        let y = pool::adaptive_avg_pool(self.value(x), oh, ow);
        self.push(y, Op::AdaptiveAvgPool(x), &[x])
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        self.adaptive_avg_pool(x, 1, 1)
    }

    pub fn resize_nearest(&mut self, x: Var, oh: usize, ow: usize) -> Var {
        let (_, _, h, w) = self.value(x).dims4();
        if (h, w) == (oh, ow) {
            return x;
        }
        let y = pool::resize_nearest(self.value(x), oh, ow);
        self.push(y, Op::ResizeNearest(x), &[x])
    }

    pub fn upsample(&mut self, x: Var, factor: usize) -> Var {
        let (_, _, h, w) = self.value(x).dims4();
        self.resize_nearest(x, h * factor, w * factor)
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let (n, _, h, w) = self.value(xs[0]).dims4();
        let mut c_total = 0;
        for &v in xs {
            let (vn, vc, vh, vw) = self.value(v).dims4();
            assert_eq!((vn, vh, vw), (n, h, w), "concat operands differ outside the channel axis");
            c_total += vc;
        }
        let plane = h * w;
        let mut y = Tensor::zeros(&[n, c_total, h, w]);
        for b in 0..n {
            let mut off = b * c_total * plane;
            for &v in xs {
                let t = self.value(v);
                let c = t.shape()[1];
                let src = &t.data()[b * c * plane..(b + 1) * c * plane];
                y.data_mut()[off..off + c * plane].copy_from_slice(src);
                off += c * plane;
            }
        }
        self.push(y, Op::Concat(xs.to_vec()), xs)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let y = self.value(x).clone().reshaped(shape);
        self.push(y, Op::Reshape(x), &[x])
    }

    /// Batched `op(a) * op(b)` on rank-3 tensors, `op` optionally transposing.
    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let y = kernels::matmul(self.value(a), self.value(b), ta, tb);
        self.push(y, Op::MatMul { a, b, ta, tb }, &[a, b])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let y = kernels::softmax(self.value(x));
        self.push(y, Op::Softmax(x), &[x])
    }

    /// Backpropagates `seed` (the gradient of some scalar w.r.t. `root`).
    pub fn backward(&self, root: Var, seed: Tensor<T>) -> Grads<T> {
        assert!(self.record, "backward on an inference graph");
        assert_eq!(seed.shape(), self.shape(root), "seed shape must match root");
        let n_params = self
            .nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Param(i) => Some(i + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut grads: Vec<Option<Tensor<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(seed);
        let mut out = Grads {
            params: (0..n_params).map(|_| None).collect(),
            inputs: Vec::new(),
        };

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let mut acc = |v: Var, t: Tensor<T>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match grads[v.0].as_mut() {
                    Some(e) => e.add_assign(&t),
                    None => grads[v.0] = Some(t),
                }
            };
            match &node.op {
                Op::Input => out.inputs.push((Var(idx), g)),
                Op::Param(i) => out.params[*i] = Some(g),
                Op::Conv2d { x, w, b, cfg } => {
                    let need = [self.needs(*x), self.needs(*w), b.is_some_and(|b| self.needs(b))];
                    let r = conv::backward(self.value(*x), self.value(*w), *cfg, &g, need);
                    if let Some(d) = r.dx {
                        acc(*x, d);
                    }
                    if let Some(d) = r.dw {
                        acc(*w, d);
                    }
                    if let (Some(b), Some(d)) = (b, r.db) {
                        acc(*b, d);
                    }
                }
                Op::GroupNorm { x, gamma, beta, groups, saved } => {
                    let (dx, dg, db) = norm::backward(self.value(*x), self.value(*gamma), *groups, saved, &g);
                    acc(*x, dx);
                    acc(*gamma, dg);
                    acc(*beta, db);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let mut d = g;
                    for (gv, &v) in d.data_mut().iter_mut().zip(xv.data()) {
                        if v <= T::zero() {
                            *gv = T::zero();
                        }
                    }
                    acc(*x, d);
                }
                Op::Sigmoid(x) => {
                    let mut d = g;
                    for (gv, &y) in d.data_mut().iter_mut().zip(node.value.data()) {
                        *gv = *gv * y * (T::one() - y);
                    }
                    acc(*x, d);
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        acc(*a, kernels::reduce_to(&g, self.shape(*a)));
                    }
                    if self.needs(*b) {
                        acc(*b, kernels::reduce_to(&g, self.shape(*b)));
                    }
                }
                Op::Mul(a, b) => {
                    let (da, db) = kernels::mul_backward(
                        self.value(*a),
                        self.value(*b),
                        &g,
                        [self.needs(*a), self.needs(*b)],
                    );
                    if let Some(d) = da {
                        acc(*a, kernels::reduce_to(&d, self.shape(*a)));
                    }
                    if let Some(d) = db {
                        acc(*b, kernels::reduce_to(&d, self.shape(*b)));
                    }
                }
                Op::MaxPool2 { x, arg } => acc(*x, pool::max_pool2_backward(self.shape(*x), arg, &g)),
                Op::AdaptiveAvgPool(x) => acc(*x, pool::adaptive_avg_pool_backward(self.shape(*x), &g)),
                Op::ResizeNearest(x) => acc(*x, pool::resize_nearest_backward(self.shape(*x), &g)),
                Op::Concat(xs) => {
                    let (n, c_total, h, w) = g.dims4();
                    let plane = h * w;
                    let mut off = 0;
                    for &v in xs {
                        let c = self.shape(v)[1];
                        if self.needs(v) {
                            let mut d = Tensor::zeros(self.shape(v));
                            for b in 0..n {
                                let src = &g.data()[(b * c_total + off) * plane..(b * c_total + off + c) * plane];
                                d.data_mut()[b * c * plane..(b + 1) * c * plane].copy_from_slice(src);
                            }
                            acc(v, d);
                        }
                        off += c;
                    }
                }
                Op::Reshape(x) => {
                    let shape = self.shape(*x).to_vec();
                    acc(*x, g.reshaped(&shape));
                }
                Op::MatMul { a, b, ta, tb } => {
                    let (da, db) = kernels::matmul_backward(
                        self.value(*a),
                        self.value(*b),
                        *ta,
                        *tb,
                        &g,
                        [self.needs(*a), self.needs(*b)],
                    );
                    if let Some(d) = da {
                        acc(*a, d);
                    }
                    if let Some(d) = db {
                        acc(*b, d);
                    }
                }
                Op::Softmax(x) => acc(*x, kernels::softmax_backward(&node.value, &g)),
            }
        }
        out
    }
}
