//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! Every primitive application appends a node to a [`Tape`]. Nodes only
//! refer to earlier nodes, so the tape is always in topological order and
//! [`Tape::backward`] is a single reverse sweep. Gradients flowing into a
//! node that is used several times (a weight shared across every element of
//! a set, say) are summed.

pub(crate) mod kernels;
mod primitive;

use std::sync::Arc;

use primitive::Saved;
pub use primitive::{Primitive, PrimitiveKind, Segments};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Origin {
    Leaf { trainable: bool },
    Op(Primitive),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    origin: Origin,
    inputs: Vec<usize>,
    saved: Saved,
    needs_grad: bool,
}

/// Append-only record of a computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Moves the gradient out, leaving `None`.
    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a value that is not differentiated (data, targets).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// Records a trainable leaf; [`Tape::backward`] always reports a
    /// gradient for it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            origin: Origin::Leaf { trainable },
            inputs: Vec::new(),
            saved: Saved::Nothing,
            needs_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Argmax indices recorded by `reduce_max` / `segment_max` nodes.
    pub fn saved_indices(&self, var: Var) -> Option<&[usize]> {
        match &self.nodes.get(var.0)?.saved {
            Saved::Indices(idx) => Some(idx),
            _ => None,
        }
    }

    /// Applies `prim` to `inputs` and records the result.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        let next = self.nodes.len();
        if let Some(bad) = inputs.iter().find(|v| v.0 >= next) {
            return Err(Error::TapeOrder {
                node: next,
                input: bad.0,
            });
        }
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let (value, saved) = primitive::forward(&prim, &values)?;
        if !value.all_finite() {
            return Err(Error::NonFinite {
                op: prim.kind().name(),
            });
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            origin: Origin::Op(prim),
            inputs: inputs.iter().map(|v| v.0).collect(),
            saved,
            needs_grad,
        });
        Ok(Var(next))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_node = self.nodes.get(loss.0).ok_or(Error::TapeOrder {
            node: loss.0,
            input: loss.0,
        })?;
        if !loss_node.value.is_scalar() {
            return Err(Error::NotScalar(loss_node.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(loss_node.value.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            let Origin::Op(prim) = &node.origin else {
                continue;
            };
            if !node.needs_grad {
                continue;
            }
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            if let Some(&bad) = node.inputs.iter().find(|&&i| i >= id) {
                return Err(Error::TapeOrder {
                    node: id,
                    input: bad,
                });
            }
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let needs: Vec<bool> = node
                .inputs
                .iter()
                .map(|&i| self.nodes[i].needs_grad)
                .collect();
            let input_grads =
                primitive::backward(prim, &inputs, &node.value, &node.saved, &upstream, &needs);
            for (&input, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !self.nodes[input].needs_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
            // keep the loss gradient visible to callers
            if id == loss.0 {
                grads[id] = Some(upstream);
            }
        }

        for (node, slot) in self.nodes.iter().zip(grads.iter_mut()) {
            if matches!(node.origin, Origin::Leaf { trainable: true }) && slot.is_none() {
                *slot = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.apply(Primitive::Scale(factor), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Relu, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Tanh, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Sigmoid, &[x])
    }

    pub fn elu(&mut self, x: Var, alpha: f64) -> Result<Var> {
        self.apply(Primitive::Elu { alpha }, &[x])
    }

    pub fn reduce_sum(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::ReduceSum { axis }, &[x])
    }

    pub fn reduce_max(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::ReduceMax { axis }, &[x])
    }

    pub fn reduce_mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::ReduceMean { axis }, &[x])
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::Softmax { axis }, &[x])
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        self.apply(Primitive::Concat { axis }, xs)
    }

    pub fn mse_loss(&mut self, prediction: Var, target: Var) -> Result<Var> {
        self.apply(Primitive::MseLoss, &[prediction, target])
    }

    pub fn hinge_margin_loss(&mut self, positive: Var, negative: Var, delta: f64) -> Result<Var> {
        self.apply(Primitive::HingeMarginLoss { delta }, &[positive, negative])
    }

    pub fn set_softmax_nll(
        &mut self,
        scores: Var,
        segments: &Segments,
        targets: &[usize],
    ) -> Result<Var> {
        self.apply(
            Primitive::SetSoftmaxNll {
                segments: segments.clone(),
                targets: Arc::from(targets),
            },
            &[scores],
        )
    }

    pub fn segment_sum(&mut self, x: Var, segments: &Segments) -> Result<Var> {
        self.apply(Primitive::SegmentSum(segments.clone()), &[x])
    }

    pub fn segment_max(&mut self, x: Var, segments: &Segments) -> Result<Var> {
        self.apply(Primitive::SegmentMax(segments.clone()), &[x])
    }

    pub fn segment_mean(&mut self, x: Var, segments: &Segments) -> Result<Var> {
        self.apply(Primitive::SegmentMean(segments.clone()), &[x])
    }

    pub fn segment_expand(&mut self, x: Var, segments: &Segments) -> Result<Var> {
        self.apply(Primitive::SegmentExpand(segments.clone()), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.apply(Primitive::Reshape(shape.to_vec()), &[x])
    }
}
