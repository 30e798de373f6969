//! One small graph per primitive, with inputs kept away from kinks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{PrimitiveKind, Segments, Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

pub type ProbeLoss = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var> + Send + Sync>;

/// Parameters and the scalar loss that exercises one primitive.
pub struct Probe {
    pub params: Vec<Tensor>,
    pub loss: ProbeLoss,
}

/// `1e-6` for smooth primitives, `1e-4` otherwise.
pub fn tolerance(kind: PrimitiveKind) -> f64 {
    if kind.is_smooth() {
        1e-6
    } else {
        1e-4
    }
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

/// Entries at least 0.2 from zero.
fn off_origin(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    uniform(shape, rng).map(|v| if v >= 0.0 { v + 0.2 } else { v - 0.2 })
}

/// A shuffled grid with spacing 0.1, so every maximum is unique.
fn spaced(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 - 0.05 * n as f64).collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(shape.to_vec(), vals).expect("length matches shape")
}

/// `sum(w * out)` with fixed nonuniform weights.
fn weighted_sum(tape: &mut Tape, out: Var) -> Result<Var> {
    let shape = tape.value(out).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = (0..n).map(|i| (i as f64 * 0.7 + 0.3).sin()).collect();
    let w = tape.constant(Tensor::new(shape.clone(), w)?);
    let mut acc = tape.mul(out, w)?;
    for _ in 0..shape.len() {
        acc = tape.reduce_sum(acc, 0)?;
    }
    Ok(acc)
}

fn one(x: Tensor, op: fn(&mut Tape, Var) -> Result<Var>) -> Probe {
    Probe {
        params: vec![x],
        loss: Box::new(move |t, p| {
            let y = op(t, p[0])?;
            weighted_sum(t, y)
        }),
    }
}

fn two(a: Tensor, b: Tensor, op: fn(&mut Tape, Var, Var) -> Result<Var>) -> Probe {
    Probe {
        params: vec![a, b],
        loss: Box::new(move |t, p| {
            let y = op(t, p[0], p[1])?;
            weighted_sum(t, y)
        }),
    }
}

fn segmented(x: Tensor, op: fn(&mut Tape, Var, &Segments) -> Result<Var>) -> Probe {
    let seg = Segments::from_sizes(&[2, 3, 1]).expect("positive sizes");
    Probe {
        params: vec![x],
        loss: Box::new(move |t, p| {
            let y = op(t, p[0], &seg)?;
            weighted_sum(t, y)
        }),
    }
}

/// Graph for `kind` drawn from `rng`.
pub fn probe(kind: PrimitiveKind, rng: &mut ChaCha8Rng) -> Probe {
    use PrimitiveKind as K;
    match kind {
        K::MatMul => two(uniform(&[3, 4], rng), uniform(&[4, 2], rng), |t, a, b| {
            t.matmul(a, b)
        }),
        K::Add => two(uniform(&[3, 4], rng), uniform(&[1, 4], rng), |t, a, b| {
            t.add(a, b)
        }),
        K::Sub => two(uniform(&[3, 4], rng), uniform(&[3, 4], rng), |t, a, b| {
            t.sub(a, b)
        }),
        K::Mul => two(uniform(&[3, 4], rng), uniform(&[4], rng), |t, a, b| {
            t.mul(a, b)
        }),
        K::Scale => one(uniform(&[2, 3], rng), |t, x| t.scale(x, -1.7)),
        K::Relu => one(off_origin(&[3, 3], rng), |t, x| t.relu(x)),
        K::Tanh => one(uniform(&[3, 3], rng), |t, x| t.tanh(x)),
        K::Sigmoid => one(uniform(&[3, 3], rng), |t, x| t.sigmoid(x)),
        K::Elu => one(off_origin(&[3, 3], rng), |t, x| t.elu(x, 0.7)),
        K::ReduceSum => one(uniform(&[2, 3, 2], rng), |t, x| t.reduce_sum(x, 1)),
        K::ReduceMean => one(uniform(&[2, 3, 2], rng), |t, x| t.reduce_mean(x, 2)),
        K::ReduceMax => one(spaced(&[3, 4], rng), |t, x| t.reduce_max(x, 1)),
        K::Softmax => one(uniform(&[2, 5], rng), |t, x| t.softmax(x, 1)),
        K::Reshape => one(uniform(&[2, 6], rng), |t, x| t.reshape(x, &[3, 4])),
        K::Concat => Probe {
            params: vec![
                uniform(&[2, 3], rng),
                uniform(&[2, 1], rng),
                uniform(&[2, 2], rng),
            ],
            loss: Box::new(|t, p| {
                let y = t.concat(p, 1)?;
                weighted_sum(t, y)
            }),
        },
        K::MseLoss => Probe {
            params: vec![uniform(&[4, 1], rng), uniform(&[4, 1], rng)],
            loss: Box::new(|t, p| t.mse_loss(p[0], p[1])),
        },
        K::HingeMarginLoss => {
            // alternate pairs sit 0.3 inside and 0.3 outside the margin
            let pos = uniform(&[4], rng);
            let neg = pos
                .data()
                .iter()
                .enumerate()
                .map(|(i, p)| p - 0.5 + if i % 2 == 0 { 0.3 } else { -0.3 })
                .collect();
            Probe {
                params: vec![pos, Tensor::new(vec![4], neg).expect("length 4")],
                loss: Box::new(|t, p| t.hinge_margin_loss(p[0], p[1], 0.5)),
            }
        }
        K::SetSoftmaxNll => {
            let seg = Segments::from_sizes(&[2, 3, 1]).expect("positive sizes");
            Probe {
                params: vec![uniform(&[6, 1], rng)],
                loss: Box::new(move |t, p| t.set_softmax_nll(p[0], &seg, &[1, 0, 0])),
            }
        }
        K::SegmentSum => segmented(uniform(&[6, 2], rng), |t, x, s| t.segment_sum(x, s)),
        K::SegmentMean => segmented(uniform(&[6, 2], rng), |t, x, s| t.segment_mean(x, s)),
        K::SegmentMax => segmented(spaced(&[6, 2], rng), |t, x, s| t.segment_max(x, s)),
        K::SegmentExpand => segmented(uniform(&[3, 2], rng), |t, x, s| t.segment_expand(x, s)),
    }
}
