use std::sync::atomic::{AtomicU64, Ordering};

use super::{activation, conv, loss, norm, shape_ops, store, Element, Tensor};
use crate::error::{invalid, Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// Recorded operation and whatever it saved for the backward pass.
pub(crate) enum Op<E> {
    Leaf,
    Reshape { input: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { input: usize, factor: f64 },
    Sum { input: usize },
    TimeDiff { input: usize, step: usize },
    Concat { a: usize, b: usize },
    AvgPoolTime { input: usize },
    Relu { input: usize },
    LeakyRelu { input: usize, slope: f64 },
    Gelu { input: usize },
    Dropout { input: usize, keep: Vec<bool>, scale: f64 },
    Softmax { input: usize },
    CrossEntropy { logits: usize, labels: Vec<usize>, probs: Vec<f64> },
    Linear { input: usize, weight: usize, bias: usize },
    Conv1d { input: usize, weight: usize, bias: usize, groups: usize, padding: usize },
    BatchNorm { input: usize, gamma: usize, beta: usize, layout: norm::FeatureLayout, train: bool, normalized: Vec<E>, inv_std: Vec<f64> },
    LayerNorm { input: usize, gamma: usize, beta: usize, normalized: Vec<E>, inv_std: Vec<f64> },
}

struct Node<E> {
    value: Tensor<E>,
    op: Op<E>,
    needs_grad: bool,
    finite: bool,
}

/// Ordered record of operations for one computation graph.
///
/// Nodes are appended in execution order, so every input of a node has a
/// smaller index. [`Tape::backward`] walks the nodes once in reverse and
/// accumulates `d loss / d leaf` into each leaf created with
/// `requires_grad = true`.
///
/// A tape is single-threaded; independent tapes may live on different
/// threads.
pub struct Tape<E> {
    id: u64,
    nodes: Vec<Node<E>>,
    /// Gradients stay in `f64` until read through [`Tape::grad`].
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> Tape<E> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an input or parameter.
    pub fn leaf(&mut self, value: Tensor<E>, requires_grad: bool) -> Var {
        let finite = value.all_finite();
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: requires_grad, finite });
        self.grads.push(None);
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    /// Shorthand for a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<E>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor<E> {
        let idx = self.index(var).expect("variable belongs to another tape");
        &self.nodes[idx].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.value(var).shape()
    }

    /// Accumulated gradient of a leaf after [`Tape::backward`].
    ///
    /// `None` when the leaf does not require a gradient or the loss did not
    /// depend on it.
    pub fn grad(&self, var: Var) -> Option<Tensor<E>> {
        let idx = self.index(var).ok()?;
        let g = self.grads[idx].as_ref()?;
        Some(Tensor::new(self.nodes[idx].value.shape(), store(g.clone())).expect("grad shape"))
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.index(var).map(|i| self.nodes[i].needs_grad).unwrap_or(false)
    }

    pub(crate) fn index(&self, var: Var) -> Result<usize> {
        if var.tape != self.id || var.index >= self.nodes.len() {
            return Err(invalid("variable was recorded on a different tape"));
        }
        Ok(var.index)
    }

    pub(crate) fn node_value(&self, idx: usize) -> &Tensor<E> {
        &self.nodes[idx].value
    }

    pub(crate) fn push(&mut self, value: Tensor<E>, op: Op<E>, inputs: &[usize]) -> Var {
        // New operations make another backward pass legal; leaf gradients keep accumulating.
        self.backward_done = false;
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        let inputs_finite = inputs.iter().all(|&i| self.nodes[i].finite);
        let finite = if cfg!(debug_assertions) || !inputs_finite {
            value.all_finite()
        } else {
            true
        };
        debug_assert!(
            finite || !inputs_finite,
            "non-finite output from finite inputs in {}",
            op_name(&op)
        );
        self.nodes.push(Node { value, op, needs_grad, finite });
        self.grads.push(None);
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    /// Push an output computed in `f64`, rounding to the storage precision.
    pub(crate) fn push_f64(&mut self, shape: &[usize], values: Vec<f64>, op: Op<E>, inputs: &[usize]) -> Var {
        self.push_values(shape, store(values), op, inputs)
    }

    pub(crate) fn push_values(&mut self, shape: &[usize], values: Vec<E>, op: Op<E>, inputs: &[usize]) -> Var {
        let value = Tensor::new(shape, values).expect("op output shape");
        self.push(value, op, inputs)
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Gradients are accumulated additively into every `requires_grad` leaf.
    /// Calling this twice without recording new operations is an error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if loss.tape != self.id || loss.index >= self.nodes.len() {
            return Err(Error::InvalidState("loss was not recorded on this tape".into()));
        }
        if self.backward_done {
            return Err(Error::InvalidState("backward already ran on this tape".into()));
        }
        let root = loss.index;
        if self.nodes[root].value.numel() != 1 {
            return Err(invalid(format!(
                "loss must be a scalar, got shape {:?}",
                self.nodes[root].value.shape()
            )));
        }
        if !self.nodes[root].needs_grad {
            return Err(Error::InvalidState("loss does not depend on any leaf that requires a gradient".into()));
        }
        self.grads[root] = Some(vec![1.0]);
        for idx in (0..=root).rev() {
            if matches!(self.nodes[idx].op, Op::Leaf) || !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = self.grads[idx].take() else { continue };
            for (input, contribution) in self.backward_node(idx, g) {
                self.accumulate(input, contribution);
            }
        }
        self.backward_done = true;
        Ok(())
    }

    fn accumulate(&mut self, idx: usize, contribution: Vec<f64>) {
        if !self.nodes[idx].needs_grad {
            return;
        }
        match &mut self.grads[idx] {
            Some(g) => g.iter_mut().zip(&contribution).for_each(|(dst, c)| *dst += c),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn needs(&self, idx: usize) -> bool {
        self.nodes[idx].needs_grad
    }

    /// Hand `g` unchanged to every input that needs it, moving it into the last.
    fn pass_through(&self, inputs: &[usize], g: Vec<f64>) -> Vec<(usize, Vec<f64>)> {
        let targets: Vec<usize> = inputs.iter().copied().filter(|&i| self.needs(i)).collect();
        let Some((&last, rest)) = targets.split_last() else { return Vec::new() };
        let mut out: Vec<(usize, Vec<f64>)> = rest.iter().map(|&i| (i, g.clone())).collect();
        out.push((last, g));
        out
    }

    fn backward_node(&self, idx: usize, g: Vec<f64>) -> Vec<(usize, Vec<f64>)> {
        match self.nodes[idx].op {
            Op::Reshape { input } => return self.pass_through(&[input], g),
            Op::Add { a, b } => return self.pass_through(&[a, b], g),
            _ => {}
        }
        let g = &g[..];
        let mut out = Vec::new();
        let mut emit = |input: usize, f: &dyn Fn() -> Vec<f64>| {
            if self.needs(input) {
                out.push((input, f()));
            }
        };
        let val = |i: usize| self.nodes[i].value.data();
        let val_f64 = |i: usize| E::slice_to_f64(self.nodes[i].value.data());
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Reshape { .. } | Op::Add { .. } => unreachable!("handled by pass_through"),
            Op::Sub { a, b } => {
                emit(*a, &|| g.to_vec());
                emit(*b, &|| g.iter().map(|v| -v).collect());
            }
            Op::Mul { a, b } => {
                emit(*a, &|| g.iter().zip(val(*b)).map(|(g, y)| g * y.to_f64()).collect());
                emit(*b, &|| g.iter().zip(val(*a)).map(|(g, x)| g * x.to_f64()).collect());
            }
            Op::Scale { input, factor } => emit(*input, &|| g.iter().map(|v| v * factor).collect()),
            Op::Sum { input } => emit(*input, &|| vec![g[0]; self.nodes[*input].value.numel()]),
            Op::TimeDiff { input, step } => {
                emit(*input, &|| shape_ops::time_diff_backward(self.nodes[*input].value.shape(), *step, g))
            }
            Op::Concat { a, b } => {
                let (ga, gb) = shape_ops::concat_backward(
                    self.nodes[*a].value.shape(),
                    self.nodes[*b].value.shape(),
                    g,
                );
                emit(*a, &|| ga.clone());
                emit(*b, &|| gb.clone());
            }
            Op::AvgPoolTime { input } => {
                emit(*input, &|| shape_ops::avg_pool_backward(self.nodes[*input].value.shape(), g))
            }
            Op::Relu { input } => emit(*input, &|| activation::relu_backward(&val(*input), g)),
            Op::LeakyRelu { input, slope } => {
                emit(*input, &|| activation::leaky_relu_backward(&val(*input), *slope, g))
            }
            Op::Gelu { input } => emit(*input, &|| activation::gelu_backward(&val(*input), g)),
            Op::Dropout { input, keep, scale } => {
                emit(*input, &|| activation::dropout_backward(keep, *scale, g))
            }
            Op::Softmax { input } => {
                let y = val_f64(idx);
                let n = *self.nodes[*input].value.shape().last().unwrap();
                emit(*input, &|| activation::softmax_backward(&y, n, g))
            }
            Op::CrossEntropy { logits, labels, probs } => {
                emit(*logits, &|| loss::cross_entropy_backward(probs, labels, g[0]))
            }
            Op::Linear { input, weight, bias } => {
                let x = &self.nodes[*input].value;
                let w = &self.nodes[*weight].value;
                let (batch, features) = (x.shape()[0], x.shape()[1]);
                let outputs = w.shape()[0];
                emit(*input, &|| conv::linear_backward_input(&val_f64(*weight), g, batch, features, outputs));
                emit(*weight, &|| conv::linear_backward_weight(val(*input), g, batch, features, outputs));
                emit(*bias, &|| conv::bias_backward(g, batch, outputs, 1));
            }
            Op::Conv1d { input, weight, bias, groups, padding } => {
                let geom = conv::ConvGeometry::new(
                    self.nodes[*input].value.shape(),
                    self.nodes[*weight].value.shape(),
                    *groups,
                    *padding,
                )
                .expect("geometry validated at record time");
                emit(*input, &|| conv::conv1d_backward_input(&geom, &val_f64(*weight), g));
                emit(*weight, &|| conv::conv1d_backward_weight(&geom, val(*input), g));
                emit(*bias, &|| conv::bias_backward(g, geom.batch, geom.out_channels, geom.out_len));
            }
            Op::BatchNorm { input, gamma, beta, layout, train, normalized, inv_std } => {
                let (dx, dgamma, dbeta) =
                    norm::batchnorm_backward(layout, normalized, inv_std, &val_f64(*gamma), g, *train);
                emit(*input, &|| dx.clone());
                emit(*gamma, &|| dgamma.clone());
                emit(*beta, &|| dbeta.clone());
            }
            Op::LayerNorm { input, gamma, beta, normalized, inv_std } => {
                let xhat = E::slice_to_f64(normalized);
                let dim = *self.nodes[*input].value.shape().last().unwrap();
                let (dx, dgamma, dbeta) =
                    norm::layernorm_backward(dim, &xhat, inv_std, &val_f64(*gamma), g);
                emit(*input, &|| dx.clone());
                emit(*gamma, &|| dgamma.clone());
                emit(*beta, &|| dbeta.clone());
            }
        }
        out
    }
}

fn op_name<E>(op: &Op<E>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Reshape { .. } => "reshape",
        Op::Add { .. } => "add",
        Op::Sub { .. } => "sub",
        Op::Mul { .. } => "mul",
        Op::Scale { .. } => "scale",
        Op::Sum { .. } => "sum",
        Op::TimeDiff { .. } => "time_diff",
        Op::Concat { .. } => "concat_channels",
        Op::AvgPoolTime { .. } => "avg_pool_time",
        Op::Relu { .. } => "relu",
        Op::LeakyRelu { .. } => "leaky_relu",
        Op::Gelu { .. } => "gelu",
        Op::Dropout { .. } => "dropout",
        Op::Softmax { .. } => "softmax_lastdim",
        Op::CrossEntropy { .. } => "cross_entropy_loss",
        Op::Linear { .. } => "linear",
        Op::Conv1d { .. } => "conv1d_grouped",
        Op::BatchNorm { .. } => "batchnorm1d",
        Op::LayerNorm { .. } => "layernorm_lastdim",
    }
}
