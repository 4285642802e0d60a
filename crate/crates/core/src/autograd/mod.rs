//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation in execution order, which is already
//! a topological order of the computation DAG. [`Graph::backward`] walks the
//! tape once in reverse, so each record is visited exactly once.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub mod check;
mod conv;
mod elementwise;
mod linear;
mod norm;
mod shape;

pub use norm::{BatchNormStats, BN_EPS, BN_MOMENTUM, LN_EPS};

pub use conv::{bilinear_taps, window_output};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddSuffix(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Sum(Var),
    Mean(Var),
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Slice { input: Var, axis: usize, start: usize },
    RepeatLeading(Var),
    Conv2d { input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize },
    MaxPool2d { input: Var, argmax: Vec<usize> },
    AvgPool2d { input: Var, window: usize, stride: usize },
    GlobalAvgPool(Var),
    ResizeBilinear { input: Var, rows: Vec<(usize, usize, f64)>, cols: Vec<(usize, usize, f64)> },
    Softmax(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, weights: Option<Vec<f64>>, probs: Vec<f64> },
    BatchNorm { input: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<f64>, train: bool },
    LayerNorm { input: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<f64> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Computation tape holding values, operation records and leaf gradients.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that accumulates gradients.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        // Nothing upstream needs gradients, so the record is never replayed.
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    /// Accumulates d(loss)/d(leaf) into every tracked leaf the loss depends on.
    ///
    /// Calling it again without [`Graph::zero_grad`] adds to the stored
    /// gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if self.value(loss).numel() != 1 {
            bail!(Contract, "backward needs a scalar loss, got shape {:?}", shape);
        }
        if !self.requires_grad(loss) {
            bail!(Contract, "loss does not depend on any tracked tensor");
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    None => node.grad = Some(g),
                }
            } else {
                self.backprop(i, &g, &mut grads);
            }
        }
        Ok(())
    }

    /// Gradient buffer for `v`, allocated on first use; `None` when `v` is untracked.
    fn slot<'a>(&self, grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut Vec<T>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let n = node.value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn backprop(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(s) = self.slot(grads, v) {
                        s.iter_mut().zip(g).for_each(|(s, &g)| *s += g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(s) = self.slot(grads, *a) {
                    s.iter_mut().zip(g).for_each(|(s, &g)| *s += g);
                }
                if let Some(s) = self.slot(grads, *b) {
                    s.iter_mut().zip(g).for_each(|(s, &g)| *s -= g);
                }
            }
            Op::Mul(a, b) => self.bw_mul(*a, *b, g, grads),
            Op::AddSuffix(a, b) => self.bw_add_suffix(*a, *b, g, grads),
            Op::Scale(a, k) => {
                if let Some(s) = self.slot(grads, *a) {
                    s.iter_mut().zip(g).for_each(|(s, &g)| *s += g * *k);
                }
            }
            Op::Relu(a) => self.bw_relu(*a, g, grads),
            Op::Gelu(a) => self.bw_gelu(*a, g, grads),
            Op::Sigmoid(a) => self.bw_sigmoid(i, *a, g, grads),
            Op::Tanh(a) => self.bw_tanh(i, *a, g, grads),
            Op::Sum(a) => {
                if let Some(s) = self.slot(grads, *a) {
                    s.iter_mut().for_each(|s| *s += g[0]);
                }
            }
            Op::Mean(a) => {
                if let Some(s) = self.slot(grads, *a) {
                    let k = g[0] / T::from_usize(s.len());
                    s.iter_mut().for_each(|s| *s += k);
                }
            }
            Op::MatMul(a, b) => self.bw_matmul(*a, *b, g, grads),
            Op::BatchMatMul(a, b) => self.bw_bmm(*a, *b, g, grads),
            Op::Reshape(a) => {
                if let Some(s) = self.slot(grads, *a) {
                    s.iter_mut().zip(g).for_each(|(s, &g)| *s += g);
                }
            }
            Op::Permute(a, perm) => self.bw_permute(i, *a, perm, g, grads),
            Op::Concat(inputs, axis) => self.bw_concat(inputs, *axis, g, grads),
            Op::Slice { input, axis, start } => self.bw_slice(i, *input, *axis, *start, g, grads),
            Op::RepeatLeading(a) => {
                if let Some(s) = self.slot(grads, *a) {
                    let inner = s.len();
                    for chunk in g.chunks(inner) {
                        s.iter_mut().zip(chunk).for_each(|(s, &g)| *s += g);
                    }
                }
            }
            Op::Conv2d { input, weight, bias, stride, padding } => {
                self.bw_conv2d(i, *input, *weight, *bias, *stride, *padding, g, grads)
            }
            Op::MaxPool2d { input, argmax } => {
                if let Some(s) = self.slot(grads, *input) {
                    for (&src, &g) in argmax.iter().zip(g) {
                        s[src] += g;
                    }
                }
            }
            Op::AvgPool2d { input, window, stride } => {
                self.bw_avgpool(i, *input, *window, *stride, g, grads)
            }
            Op::GlobalAvgPool(a) => self.bw_global_avg(*a, g, grads),
            Op::ResizeBilinear { input, rows, cols } => self.bw_resize(*input, rows, cols, g, grads),
            Op::Softmax(a) => self.bw_softmax(i, *a, g, grads),
            Op::CrossEntropy { logits, targets, weights, probs } => {
                self.bw_cross_entropy(*logits, targets, weights.as_deref(), probs, g, grads)
            }
            Op::BatchNorm { input, gamma, beta, xhat, inv_std, train } => {
                self.bw_batchnorm(*input, *gamma, *beta, xhat, inv_std, *train, g, grads)
            }
            Op::LayerNorm { input, gamma, beta, xhat, inv_std } => {
                self.bw_layernorm(*input, *gamma, *beta, xhat, inv_std, g, grads)
            }
        }
    }
}
