//! Primitive operations: forward values and vector-Jacobian products.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::kernels::{axis_split, gemm, sigmoid};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Offsets delimiting consecutive row segments (one per set) of a matrix.
///
/// `offsets[0] == 0`, strictly increasing, last entry is the row count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments(Arc<[usize]>);

impl Segments {
    pub fn new(offsets: Vec<usize>) -> Result<Self> {
        if offsets.len() < 2 || offsets[0] != 0 {
            return Err(Error::InvalidBatch(
                "offsets must start at 0 and delimit at least one set".into(),
            ));
        }
        if let Some(w) = offsets.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidBatch(format!(
                "offsets must be strictly increasing (found {} then {}); empty sets are not allowed",
                w[0], w[1]
            )));
        }
        Ok(Segments(offsets.into()))
    }

    /// Builds segments from per-set sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        let mut acc = 0;
        for &s in sizes {
            acc += s;
            offsets.push(acc);
        }
        Segments::new(offsets)
    }

    pub fn offsets(&self) -> &[usize] {
        &self.0
    }

    /// Number of segments.
    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total(&self) -> usize {
        self.0[self.0.len() - 1]
    }

    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.0[s]..self.0[s + 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.0.windows(2).map(|w| w[0]..w[1])
    }
}

/// Name-only view of a primitive, used for parsing and diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrimitiveKind {
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    Relu,
    Tanh,
    Sigmoid,
    Elu,
    ReduceSum,
    ReduceMax,
    ReduceMean,
    Softmax,
    Concat,
    MseLoss,
    HingeMarginLoss,
    SetSoftmaxNll,
    SegmentSum,
    SegmentMax,
    SegmentMean,
    SegmentExpand,
    Reshape,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 22] = [
        PrimitiveKind::MatMul,
        PrimitiveKind::Add,
        PrimitiveKind::Sub,
        PrimitiveKind::Mul,
        PrimitiveKind::Scale,
        PrimitiveKind::Relu,
        PrimitiveKind::Tanh,
        PrimitiveKind::Sigmoid,
        PrimitiveKind::Elu,
        PrimitiveKind::ReduceSum,
        PrimitiveKind::ReduceMax,
        PrimitiveKind::ReduceMean,
        PrimitiveKind::Softmax,
        PrimitiveKind::Concat,
        PrimitiveKind::MseLoss,
        PrimitiveKind::HingeMarginLoss,
        PrimitiveKind::SetSoftmaxNll,
        PrimitiveKind::SegmentSum,
        PrimitiveKind::SegmentMax,
        PrimitiveKind::SegmentMean,
        PrimitiveKind::SegmentExpand,
        PrimitiveKind::Reshape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::MatMul => "matmul",
            PrimitiveKind::Add => "add",
            PrimitiveKind::Sub => "sub",
            PrimitiveKind::Mul => "mul",
            PrimitiveKind::Scale => "scale",
            PrimitiveKind::Relu => "relu",
            PrimitiveKind::Tanh => "tanh",
            PrimitiveKind::Sigmoid => "sigmoid",
            PrimitiveKind::Elu => "elu",
            PrimitiveKind::ReduceSum => "reduce_sum",
            PrimitiveKind::ReduceMax => "reduce_max",
            PrimitiveKind::ReduceMean => "reduce_mean",
            PrimitiveKind::Softmax => "softmax",
            PrimitiveKind::Concat => "concat",
            PrimitiveKind::MseLoss => "mse_loss",
            PrimitiveKind::HingeMarginLoss => "hinge_margin_loss",
            PrimitiveKind::SetSoftmaxNll => "set_softmax_nll",
            PrimitiveKind::SegmentSum => "segment_sum",
            PrimitiveKind::SegmentMax => "segment_max",
            PrimitiveKind::SegmentMean => "segment_mean",
            PrimitiveKind::SegmentExpand => "segment_expand",
            PrimitiveKind::Reshape => "reshape",
        }
    }

    /// Smooth primitives are differentiable everywhere.
    pub fn is_smooth(self) -> bool {
        !matches!(
            self,
            PrimitiveKind::Relu
                | PrimitiveKind::ReduceMax
                | PrimitiveKind::SegmentMax
                | PrimitiveKind::HingeMarginLoss
                | PrimitiveKind::Elu
        )
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrimitiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PrimitiveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownPrimitive(s.to_string()))
    }
}

/// A primitive together with its attributes.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    MatMul,
    /// Elementwise sum. The second operand of `Add`, `Sub` and `Mul` may
    /// also be a bias broadcast over the leading axis of the first, or a
    /// single value broadcast everywhere.
    Add,
    Sub,
    /// Elementwise (Hadamard) product.
    Mul,
    Scale(f64),
    Relu,
    Tanh,
    Sigmoid,
    Elu {
        alpha: f64,
    },
    ReduceSum {
        axis: usize,
    },
    ReduceMax {
        axis: usize,
    },
    ReduceMean {
        axis: usize,
    },
    Softmax {
        axis: usize,
    },
    Concat {
        axis: usize,
    },
    MseLoss,
    HingeMarginLoss {
        delta: f64,
    },
    /// Mean over sets of `-log softmax(scores within set)[target]`.
    SetSoftmaxNll {
        segments: Segments,
        targets: Arc<[usize]>,
    },
    SegmentSum(Segments),
    SegmentMax(Segments),
    SegmentMean(Segments),
    /// Repeats row `s` of an `S x D` matrix over every row of segment `s`.
    SegmentExpand(Segments),
    /// Same data in row-major order under a new shape.
    Reshape(Vec<usize>),
}

impl Primitive {
    pub fn kind(&self) -> PrimitiveKind {
        match self {
            Primitive::MatMul => PrimitiveKind::MatMul,
            Primitive::Add => PrimitiveKind::Add,
            Primitive::Sub => PrimitiveKind::Sub,
            Primitive::Mul => PrimitiveKind::Mul,
            Primitive::Scale(_) => PrimitiveKind::Scale,
            Primitive::Relu => PrimitiveKind::Relu,
            Primitive::Tanh => PrimitiveKind::Tanh,
            Primitive::Sigmoid => PrimitiveKind::Sigmoid,
            Primitive::Elu { .. } => PrimitiveKind::Elu,
            Primitive::ReduceSum { .. } => PrimitiveKind::ReduceSum,
            Primitive::ReduceMax { .. } => PrimitiveKind::ReduceMax,
            Primitive::ReduceMean { .. } => PrimitiveKind::ReduceMean,
            Primitive::Softmax { .. } => PrimitiveKind::Softmax,
            Primitive::Concat { .. } => PrimitiveKind::Concat,
            Primitive::MseLoss => PrimitiveKind::MseLoss,
            Primitive::HingeMarginLoss { .. } => PrimitiveKind::HingeMarginLoss,
            Primitive::SetSoftmaxNll { .. } => PrimitiveKind::SetSoftmaxNll,
            Primitive::SegmentSum(_) => PrimitiveKind::SegmentSum,
            Primitive::SegmentMax(_) => PrimitiveKind::SegmentMax,
            Primitive::SegmentMean(_) => PrimitiveKind::SegmentMean,
            Primitive::SegmentExpand(_) => PrimitiveKind::SegmentExpand,
            Primitive::Reshape(_) => PrimitiveKind::Reshape,
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Primitive::Concat { .. } => None,
            Primitive::MatMul
            | Primitive::Add
            | Primitive::Sub
            | Primitive::Mul
            | Primitive::MseLoss
            | Primitive::HingeMarginLoss { .. } => Some(2),
            _ => Some(1),
        }
    }
}

/// Values kept from the forward pass for the backward pass.
#[derive(Clone, Debug, Default)]
pub(crate) enum Saved {
    #[default]
    Nothing,
    Indices(Vec<usize>),
    Probabilities(Vec<f64>),
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s.remove(axis);
    s
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::shape(
            op,
            format!("axis {axis} out of range for {shape:?}"),
        ));
    }
    Ok(())
}

/// Rows and columns of a segment operand: rank 1 is treated as `N x 1`.
fn segment_dims(op: &'static str, x: &Tensor) -> Result<(usize, usize)> {
    match x.shape() {
        [n] => Ok((*n, 1)),
        [n, d] => Ok((*n, *d)),
        s => Err(Error::shape(op, format!("expected rank 1 or 2, got {s:?}"))),
    }
}

/// How the second operand of a binary elementwise primitive lines up with
/// the first.
#[derive(Clone, Copy)]
enum Broadcast {
    Same,
    /// Repeats every `period` entries (bias over the leading axis).
    Rows(usize),
    Scalar,
}

impl Broadcast {
    fn index(self, i: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Rows(period) => i % period,
            Broadcast::Scalar => 0,
        }
    }
}

fn broadcast_layout(a: &[usize], b: &[usize]) -> Option<Broadcast> {
    if a == b {
        return Some(Broadcast::Same);
    }
    if b.iter().product::<usize>() == 1 {
        return Some(Broadcast::Scalar);
    }
    if a.len() >= 2 {
        let rest = &a[1..];
        if b == rest || (b.len() == a.len() && b[0] == 1 && &b[1..] == rest) {
            return Some(Broadcast::Rows(rest.iter().product()));
        }
    }
    None
}

pub(crate) fn forward(prim: &Primitive, inputs: &[&Tensor]) -> Result<(Tensor, Saved)> {
    if let Some(n) = prim.arity() {
        if inputs.len() != n {
            return Err(Error::shape(
                prim.kind().name(),
                format!("expected {n} inputs, got {}", inputs.len()),
            ));
        }
    }
    let unary = |f: &dyn Fn(f64) -> f64| Ok((inputs[0].map(f), Saved::Nothing));
    match prim {
        Primitive::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            let (m, k) = a.dims2()?;
            let (k2, n) = b.dims2()?;
            if k != k2 {
                return Err(Error::shape(
                    "matmul",
                    format!("{:?} x {:?}", a.shape(), b.shape()),
                ));
            }
            let mut out = vec![0.0; m * n];
            gemm(m, k, n, a.data(), k, 1, b.data(), n, 1, &mut out, false);
            Ok((Tensor::from_parts(vec![m, n], out), Saved::Nothing))
        }
        Primitive::Add | Primitive::Sub | Primitive::Mul => {
            let (a, b) = (inputs[0], inputs[1]);
            let f: fn(f64, f64) -> f64 = match prim {
                Primitive::Add => |x, y| x + y,
                Primitive::Sub => |x, y| x - y,
                _ => |x, y| x * y,
            };
            let Some(layout) = broadcast_layout(a.shape(), b.shape()) else {
                return Err(Error::shape(
                    prim.kind().name(),
                    format!("{:?} and {:?} do not broadcast", a.shape(), b.shape()),
                ));
            };
            let bd = b.data();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, bd[layout.index(i)]))
                .collect();
            Ok((Tensor::from_parts(a.shape().to_vec(), data), Saved::Nothing))
        }
        Primitive::Scale(c) => {
            let c = *c;
            unary(&|x| c * x)
        }
        Primitive::Relu => unary(&|x| if x > 0.0 { x } else { 0.0 }),
        Primitive::Tanh => unary(&f64::tanh),
        Primitive::Sigmoid => unary(&sigmoid),
        Primitive::Elu { alpha } => {
            let alpha = *alpha;
            unary(&|x| if x > 0.0 { x } else { alpha * x.exp_m1() })
        }
        Primitive::ReduceSum { axis } | Primitive::ReduceMean { axis } => {
            let x = inputs[0];
            check_axis(prim.kind().name(), x.shape(), *axis)?;
            let (outer, n, inner) = axis_split(x.shape(), *axis);
            let scale = if matches!(prim, Primitive::ReduceMean { .. }) {
                1.0 / n as f64
            } else {
                1.0
            };
            let mut out = vec![0.0; outer * inner];
            let xd = x.data();
            for o in 0..outer {
                let dst = &mut out[o * inner..(o + 1) * inner];
                for i in 0..n {
                    let src = &xd[(o * n + i) * inner..(o * n + i + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
                if scale != 1.0 {
                    dst.iter_mut().for_each(|d| *d *= scale);
                }
            }
            Ok((
                Tensor::from_parts(reduced_shape(x.shape(), *axis), out),
                Saved::Nothing,
            ))
        }
        Primitive::ReduceMax { axis } => {
            let x = inputs[0];
            check_axis("reduce_max", x.shape(), *axis)?;
            let (outer, n, inner) = axis_split(x.shape(), *axis);
            let xd = x.data();
            let mut out = vec![0.0; outer * inner];
            let mut arg = vec![0usize; outer * inner];
            for o in 0..outer {
                for j in 0..inner {
                    let mut best = 0;
                    let mut best_v = xd[o * n * inner + j];
                    for i in 1..n {
                        let v = xd[(o * n + i) * inner + j];
                        // strict comparison: ties go to the lowest index
                        if v > best_v {
                            best = i;
                            best_v = v;
                        }
                    }
                    out[o * inner + j] = best_v;
                    arg[o * inner + j] = best;
                }
            }
            Ok((
                Tensor::from_parts(reduced_shape(x.shape(), *axis), out),
                Saved::Indices(arg),
            ))
        }
        Primitive::Softmax { axis } => {
            let x = inputs[0];
            check_axis("softmax", x.shape(), *axis)?;
            let (outer, n, inner) = axis_split(x.shape(), *axis);
            let xd = x.data();
            let mut out = vec![0.0; xd.len()];
            for o in 0..outer {
                for j in 0..inner {
                    let idx = |i: usize| (o * n + i) * inner + j;
                    let m = (0..n).map(|i| xd[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for i in 0..n {
                        let e = (xd[idx(i)] - m).exp();
                        out[idx(i)] = e;
                        z += e;
                    }
                    for i in 0..n {
                        out[idx(i)] /= z;
                    }
                }
            }
            Ok((Tensor::from_parts(x.shape().to_vec(), out), Saved::Nothing))
        }
        Primitive::Concat { axis } => {
            let first = inputs
                .first()
                .ok_or_else(|| Error::shape("concat", "no inputs"))?;
            check_axis("concat", first.shape(), *axis)?;
            let mut shape = first.shape().to_vec();
            shape[*axis] = 0;
            for t in inputs {
                let s = t.shape();
                if s.len() != shape.len()
                    || s.iter()
                        .zip(first.shape())
                        .enumerate()
                        .any(|(i, (a, b))| i != *axis && a != b)
                {
                    return Err(Error::shape(
                        "concat",
                        format!("{:?} incompatible with {:?}", s, first.shape()),
                    ));
                }
                shape[*axis] += s[*axis];
            }
            let (outer, _, inner) = axis_split(&shape, *axis);
            let mut out = Vec::with_capacity(shape.iter().product());
            for o in 0..outer {
                for t in inputs {
                    let chunk = t.shape()[*axis] * inner;
                    out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
                }
            }
            Ok((Tensor::from_parts(shape, out), Saved::Nothing))
        }
        Primitive::MseLoss => {
            let (p, t) = (inputs[0], inputs[1]);
            if p.len() != t.len() {
                return Err(Error::shape(
                    "mse_loss",
                    format!("{:?} vs {:?}", p.shape(), t.shape()),
                ));
            }
            let sse: f64 = p
                .data()
                .iter()
                .zip(t.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            Ok((Tensor::scalar(sse / p.len() as f64), Saved::Nothing))
        }
        Primitive::HingeMarginLoss { delta } => {
            let (pos, neg) = (inputs[0], inputs[1]);
            if pos.len() != neg.len() {
                return Err(Error::shape(
                    "hinge_margin_loss",
                    format!("{:?} vs {:?}", pos.shape(), neg.shape()),
                ));
            }
            let total: f64 = pos
                .data()
                .iter()
                .zip(neg.data())
                .map(|(p, n)| (n - p + delta).max(0.0))
                .sum();
            Ok((Tensor::scalar(total / pos.len() as f64), Saved::Nothing))
        }
        Primitive::SetSoftmaxNll { segments, targets } => {
            let x = inputs[0];
            let (n, d) = segment_dims("set_softmax_nll", x)?;
            if d != 1 || n != segments.total() {
                return Err(Error::shape(
                    "set_softmax_nll",
                    format!("scores {:?} vs {} elements", x.shape(), segments.total()),
                ));
            }
            if targets.len() != segments.len() {
                return Err(Error::shape(
                    "set_softmax_nll",
                    format!("{} targets for {} sets", targets.len(), segments.len()),
                ));
            }
            let xd = x.data();
            let mut probs = vec![0.0; n];
            let mut total = 0.0;
            for (s, r) in segments.iter().enumerate() {
                let t = targets[s];
                if t >= r.len() {
                    return Err(Error::shape(
                        "set_softmax_nll",
                        format!("target {t} outside set {s} of size {}", r.len()),
                    ));
                }
                let m = xd[r.clone()]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = xd[r.clone()].iter().map(|v| (v - m).exp()).sum();
                let lse = m + z.ln();
                for i in r.clone() {
                    probs[i] = (xd[i] - lse).exp();
                }
                total += lse - xd[r.start + t];
            }
            Ok((
                Tensor::scalar(total / segments.len() as f64),
                Saved::Probabilities(probs),
            ))
        }
        Primitive::SegmentSum(seg) | Primitive::SegmentMean(seg) => {
            let x = inputs[0];
            let (n, d) = segment_dims(prim.kind().name(), x)?;
            if n != seg.total() {
                return Err(Error::shape(
                    prim.kind().name(),
                    format!("{n} rows vs {} segmented", seg.total()),
                ));
            }
            let mean = matches!(prim, Primitive::SegmentMean(_));
            let xd = x.data();
            let mut out = vec![0.0; seg.len() * d];
            for (s, r) in seg.iter().enumerate() {
                let dst = &mut out[s * d..(s + 1) * d];
                let count = r.len() as f64;
                for i in r {
                    for (o, v) in dst.iter_mut().zip(&xd[i * d..(i + 1) * d]) {
                        *o += v;
                    }
                }
                if mean {
                    dst.iter_mut().for_each(|o| *o /= count);
                }
            }
            Ok((Tensor::from_parts(vec![seg.len(), d], out), Saved::Nothing))
        }
        Primitive::SegmentMax(seg) => {
            let x = inputs[0];
            let (n, d) = segment_dims("segment_max", x)?;
            if n != seg.total() {
                return Err(Error::shape(
                    "segment_max",
                    format!("{n} rows vs {} segmented", seg.total()),
                ));
            }
            let xd = x.data();
            let mut out = vec![0.0; seg.len() * d];
            let mut arg = vec![0usize; seg.len() * d];
            for (s, r) in seg.iter().enumerate() {
                for j in 0..d {
                    let mut best = r.start;
                    let mut best_v = xd[r.start * d + j];
                    for i in r.start + 1..r.end {
                        let v = xd[i * d + j];
                        if v > best_v {
                            best = i;
                            best_v = v;
                        }
                    }
                    out[s * d + j] = best_v;
                    arg[s * d + j] = best;
                }
            }
            Ok((
                Tensor::from_parts(vec![seg.len(), d], out),
                Saved::Indices(arg),
            ))
        }
        Primitive::SegmentExpand(seg) => {
            let x = inputs[0];
            let (s, d) = segment_dims("segment_expand", x)?;
            if s != seg.len() {
                return Err(Error::shape(
                    "segment_expand",
                    format!("{s} rows vs {} segments", seg.len()),
                ));
            }
            let xd = x.data();
            let mut out = Vec::with_capacity(seg.total() * d);
            for (k, r) in seg.iter().enumerate() {
                for _ in r {
                    out.extend_from_slice(&xd[k * d..(k + 1) * d]);
                }
            }
            Ok((
                Tensor::from_parts(vec![seg.total(), d], out),
                Saved::Nothing,
            ))
        }
        Primitive::Reshape(shape) => {
            let x = inputs[0];
            if crate::tensor::checked_len(shape) != Some(x.len()) {
                return Err(Error::shape(
                    "reshape",
                    format!("{:?} cannot become {shape:?}", x.shape()),
                ));
            }
            Ok((
                Tensor::from_parts(shape.clone(), x.data().to_vec()),
                Saved::Nothing,
            ))
        }
    }
}

/// Gradients with respect to each input, given the upstream gradient.
/// Entries are `None` where the input does not need a gradient.
pub(crate) fn backward(
    prim: &Primitive,
    inputs: &[&Tensor],
    output: &Tensor,
    saved: &Saved,
    upstream: &Tensor,
    needs: &[bool],
) -> Vec<Option<Tensor>> {
    let g = upstream.data();
    let like = |t: &Tensor, data: Vec<f64>| Tensor::from_parts(t.shape().to_vec(), data);
    let elementwise = |f: &dyn Fn(usize) -> f64| {
        let x = inputs[0];
        vec![Some(like(x, (0..x.len()).map(|i| g[i] * f(i)).collect()))]
    };
    match prim {
        Primitive::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            let (m, k) = (a.shape()[0], a.shape()[1]);
            let n = b.shape()[1];
            let ga = needs[0].then(|| {
                let mut out = vec![0.0; m * k];
                // dA = G * B^T
                gemm(m, n, k, g, n, 1, b.data(), 1, n, &mut out, false);
                like(a, out)
            });
            let gb = needs[1].then(|| {
                let mut out = vec![0.0; k * n];
                // dB = A^T * G
                gemm(k, m, n, a.data(), 1, k, g, n, 1, &mut out, false);
                like(b, out)
            });
            vec![ga, gb]
        }
        Primitive::Add | Primitive::Sub | Primitive::Mul => {
            let (a, b) = (inputs[0], inputs[1]);
            let layout = broadcast_layout(a.shape(), b.shape()).expect("checked in forward");
            let (ad, bd) = (a.data(), b.data());
            let ga = needs[0].then(|| match prim {
                Primitive::Mul => like(
                    a,
                    (0..a.len()).map(|i| g[i] * bd[layout.index(i)]).collect(),
                ),
                _ => like(a, g.to_vec()),
            });
            let gb = needs[1].then(|| {
                let mut out = vec![0.0; b.len()];
                for (i, gi) in g.iter().enumerate() {
                    out[layout.index(i)] += match prim {
                        Primitive::Add => *gi,
                        Primitive::Sub => -gi,
                        _ => gi * ad[i],
                    };
                }
                like(b, out)
            });
            vec![ga, gb]
        }
        Primitive::Scale(c) => elementwise(&|_| *c),
        Primitive::Relu => {
            let x = inputs[0].data();
            elementwise(&|i| if x[i] > 0.0 { 1.0 } else { 0.0 })
        }
        Primitive::Tanh => {
            let y = output.data();
            elementwise(&|i| 1.0 - y[i] * y[i])
        }
        Primitive::Sigmoid => {
            let y = output.data();
            elementwise(&|i| y[i] * (1.0 - y[i]))
        }
        Primitive::Elu { alpha } => {
            let x = inputs[0].data();
            let y = output.data();
            elementwise(&|i| if x[i] > 0.0 { 1.0 } else { y[i] + alpha })
        }
        Primitive::ReduceSum { axis } | Primitive::ReduceMean { axis } => {
            let x = inputs[0];
            let (outer, n, inner) = axis_split(x.shape(), *axis);
            let scale = if matches!(prim, Primitive::ReduceMean { .. }) {
                1.0 / n as f64
            } else {
                1.0
            };
            let mut out = vec![0.0; x.len()];
            for o in 0..outer {
                let src = &g[o * inner..(o + 1) * inner];
                for i in 0..n {
                    let dst = &mut out[(o * n + i) * inner..(o * n + i + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = s * scale;
                    }
                }
            }
            vec![Some(like(x, out))]
        }
        Primitive::ReduceMax { axis } => {
            let x = inputs[0];
            let (outer, n, inner) = axis_split(x.shape(), *axis);
            let Saved::Indices(arg) = saved else {
                unreachable!("reduce_max saves argmax")
            };
            let mut out = vec![0.0; x.len()];
            for o in 0..outer {
                for j in 0..inner {
                    let i = arg[o * inner + j];
                    out[(o * n + i) * inner + j] = g[o * inner + j];
                }
            }
            vec![Some(like(x, out))]
        }
        Primitive::Softmax { axis } => {
            let y = output.data();
            let (outer, n, inner) = axis_split(output.shape(), *axis);
            let mut out = vec![0.0; y.len()];
            for o in 0..outer {
                for j in 0..inner {
                    let idx = |i: usize| (o * n + i) * inner + j;
                    let dot: f64 = (0..n).map(|i| g[idx(i)] * y[idx(i)]).sum();
                    for i in 0..n {
                        out[idx(i)] = y[idx(i)] * (g[idx(i)] - dot);
                    }
                }
            }
            vec![Some(like(output, out))]
        }
        Primitive::Concat { axis } => {
            let (outer, _, inner) = axis_split(output.shape(), *axis);
            let mut parts: Vec<Vec<f64>> =
                inputs.iter().map(|t| Vec::with_capacity(t.len())).collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (t, part) in inputs.iter().zip(parts.iter_mut()) {
                    let chunk = t.shape()[*axis] * inner;
                    part.extend_from_slice(&g[pos..pos + chunk]);
                    pos += chunk;
                }
            }
            inputs
                .iter()
                .zip(parts)
                .zip(needs)
                .map(|((t, p), &need)| need.then(|| like(t, p)))
                .collect()
        }
        Primitive::MseLoss => {
            let (p, t) = (inputs[0], inputs[1]);
            let scale = 2.0 * g[0] / p.len() as f64;
            let diff: Vec<f64> = p
                .data()
                .iter()
                .zip(t.data())
                .map(|(a, b)| scale * (a - b))
                .collect();
            let gt = needs[1].then(|| like(t, diff.iter().map(|v| -v).collect()));
            vec![needs[0].then(|| like(p, diff)), gt]
        }
        Primitive::HingeMarginLoss { delta } => {
            let (pos, neg) = (inputs[0], inputs[1]);
            let scale = g[0] / pos.len() as f64;
            let active: Vec<f64> = pos
                .data()
                .iter()
                .zip(neg.data())
                .map(|(p, n)| if n - p + delta > 0.0 { scale } else { 0.0 })
                .collect();
            let gp = needs[0].then(|| like(pos, active.iter().map(|v| -v).collect()));
            vec![gp, needs[1].then(|| like(neg, active))]
        }
        Primitive::SetSoftmaxNll { segments, targets } => {
            let Saved::Probabilities(probs) = saved else {
                unreachable!("set_softmax_nll saves probabilities")
            };
            let scale = g[0] / segments.len() as f64;
            let mut out: Vec<f64> = probs.iter().map(|p| p * scale).collect();
            for (s, r) in segments.iter().enumerate() {
                out[r.start + targets[s]] -= scale;
            }
            vec![Some(like(inputs[0], out))]
        }
        Primitive::SegmentSum(seg) | Primitive::SegmentMean(seg) => {
            let x = inputs[0];
            let d = x.len() / seg.total();
            let mean = matches!(prim, Primitive::SegmentMean(_));
            let mut out = Vec::with_capacity(x.len());
            for (s, r) in seg.iter().enumerate() {
                let scale = if mean { 1.0 / r.len() as f64 } else { 1.0 };
                let src = &g[s * d..(s + 1) * d];
                for _ in r {
                    out.extend(src.iter().map(|v| v * scale));
                }
            }
            vec![Some(like(x, out))]
        }
        Primitive::SegmentMax(_) => {
            let x = inputs[0];
            let d = output.shape()[1];
            let Saved::Indices(arg) = saved else {
                unreachable!("segment_max saves argmax")
            };
            let mut out = vec![0.0; x.len()];
            for (k, &row) in arg.iter().enumerate() {
                out[row * d + k % d] += g[k];
            }
            vec![Some(like(x, out))]
        }
        Primitive::SegmentExpand(seg) => {
            let x = inputs[0];
            let d = x.len() / seg.len();
            let mut out = vec![0.0; x.len()];
            for (s, r) in seg.iter().enumerate() {
                let dst = &mut out[s * d..(s + 1) * d];
                for i in r {
                    for (o, v) in dst.iter_mut().zip(&g[i * d..(i + 1) * d]) {
                        *o += v;
                    }
                }
            }
            vec![Some(like(x, out))]
        }
        Primitive::Reshape(_) => vec![Some(like(inputs[0], g.to_vec()))],
    }
}
