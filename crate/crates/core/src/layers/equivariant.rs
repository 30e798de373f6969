//! Permutation-equivariant set layers.
//!
//! Each variant maps an `M x D` set to an `M x D'` set such that permuting
//! the input rows permutes the output rows the same way. All of them mix an
//! element-wise term with a term that depends on the set only through a
//! commutative pooling (sum or max), broadcast back to every element.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::batch::SetBatch;
use super::dense::{glorot_bound, Activation, ParamCursor};
use crate::autodiff::{Segments, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquivariantVariant {
    /// `act(beta + lambda x + gamma 1 1^T x)` with scalar `lambda`, `gamma`
    /// acting on every channel; requires `D' == D`.
    ScalarLambdaGamma,
    /// `act(beta + x Lambda - 1 1^T x Gamma)`.
    FullLambdaGamma,
    /// `act(beta + (x - 1 maxpool(x)) Gamma)`.
    MaxpoolNormalized,
    /// `act(beta + x Lambda + 1 maxpool(x) Gamma)`.
    MaxpoolLambdaGamma,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivariantSpec {
    pub width: usize,
    pub variant: EquivariantVariant,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivariantLayer {
    pub variant: EquivariantVariant,
    /// Absent for [`EquivariantVariant::MaxpoolNormalized`]; `[1]` for the
    /// scalar variant, `D x D'` otherwise.
    pub lambda: Option<Tensor>,
    /// `[1]` for the scalar variant, `D x D'` otherwise.
    pub gamma: Tensor,
    /// `1 x D'`.
    pub beta: Tensor,
    pub activation: Activation,
}

impl EquivariantLayer {
    pub fn init<R: Rng + ?Sized>(input: usize, spec: EquivariantSpec, rng: &mut R) -> Result<Self> {
        let out = spec.width;
        if input == 0 || out == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let bound = glorot_bound(input, out);
        let (lambda, gamma) = match spec.variant {
            EquivariantVariant::ScalarLambdaGamma => {
                if input != out {
                    return Err(Error::DimensionMismatch {
                        expected: input,
                        actual: out,
                    });
                }
                (
                    Some(Tensor::uniform(&[1], 1.0, rng)),
                    Tensor::uniform(&[1], 1.0 / out as f64, rng),
                )
            }
            EquivariantVariant::MaxpoolNormalized => {
                (None, Tensor::uniform(&[input, out], bound, rng))
            }
            EquivariantVariant::FullLambdaGamma | EquivariantVariant::MaxpoolLambdaGamma => (
                Some(Tensor::uniform(&[input, out], bound, rng)),
                Tensor::uniform(&[input, out], bound, rng),
            ),
        };
        Ok(EquivariantLayer {
            variant: spec.variant,
            lambda,
            gamma,
            beta: Tensor::zeros(&[1, out]),
            activation: spec.activation,
        })
    }

    pub fn input_width(&self) -> usize {
        match self.variant {
            EquivariantVariant::ScalarLambdaGamma => self.beta.len(),
            _ => self.gamma.shape()[0],
        }
    }

    pub fn output_width(&self) -> usize {
        self.beta.len()
    }

    pub fn spec(&self) -> EquivariantSpec {
        EquivariantSpec {
            width: self.output_width(),
            variant: self.variant,
            activation: self.activation,
        }
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.lambda
            .iter()
            .chain([&self.gamma, &self.beta])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.lambda
            .iter_mut()
            .chain([&mut self.gamma, &mut self.beta])
            .collect()
    }

    /// Records the layer on `x` (`N x D`, rows grouped by `segments`).
    pub fn record(
        &self,
        tape: &mut Tape,
        params: &mut ParamCursor<'_>,
        x: Var,
        segments: &Segments,
    ) -> Result<Var> {
        let width = tape.value(x).cols();
        if width != self.input_width() {
            return Err(Error::DimensionMismatch {
                expected: self.input_width(),
                actual: width,
            });
        }
        let lambda = match self.lambda {
            Some(_) => Some(params.next()?),
            None => None,
        };
        let gamma = params.next()?;
        let beta = params.next()?;
        let pre = match self.variant {
            EquivariantVariant::ScalarLambdaGamma => {
                let own = tape.mul(x, lambda.expect("scalar variant has lambda"))?;
                let pooled = tape.segment_sum(x, segments)?;
                let pooled = tape.segment_expand(pooled, segments)?;
                let shared = tape.mul(pooled, gamma)?;
                tape.add(own, shared)?
            }
            EquivariantVariant::FullLambdaGamma => {
                let own = tape.matmul(x, lambda.expect("full variant has lambda"))?;
                // (1 1^T x) Gamma == 1 (sum(x) Gamma): multiply before expanding
                let pooled = tape.segment_sum(x, segments)?;
                let pooled = tape.matmul(pooled, gamma)?;
                let pooled = tape.segment_expand(pooled, segments)?;
                tape.sub(own, pooled)?
            }
            EquivariantVariant::MaxpoolNormalized => {
                let mx = tape.segment_max(x, segments)?;
                let mx = tape.segment_expand(mx, segments)?;
                let centered = tape.sub(x, mx)?;
                tape.matmul(centered, gamma)?
            }
            EquivariantVariant::MaxpoolLambdaGamma => {
                let own = tape.matmul(x, lambda.expect("maxpool variant has lambda"))?;
                let mx = tape.segment_max(x, segments)?;
                let mx = tape.matmul(mx, gamma)?;
                let mx = tape.segment_expand(mx, segments)?;
                tape.add(own, mx)?
            }
        };
        let pre = tape.add(pre, beta)?;
        self.activation.record(tape, pre)
    }

    /// Applies the layer to a single `M x D` set.
    pub fn forward_set(&self, set: &Tensor) -> Result<Tensor> {
        let stack = EquivariantStack {
            input_width: self.input_width(),
            layers: vec![self.clone()],
        };
        stack.forward(&SetBatch::from_sets(&[set])?)
    }
}

/// Composition of equivariant layers; the result is again equivariant.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivariantStack {
    pub input_width: usize,
    pub layers: Vec<EquivariantLayer>,
}

impl EquivariantStack {
    pub fn init<R: Rng + ?Sized>(
        input_width: usize,
        specs: &[EquivariantSpec],
        rng: &mut R,
    ) -> Result<Self> {
        let mut width = input_width;
        let mut layers = Vec::with_capacity(specs.len());
        for &s in specs {
            layers.push(EquivariantLayer::init(width, s, rng)?);
            width = s.width;
        }
        Ok(EquivariantStack {
            input_width,
            layers,
        })
    }

    pub fn output_width(&self) -> usize {
        self.layers
            .last()
            .map_or(self.input_width, EquivariantLayer::output_width)
    }

    pub fn specs(&self) -> Vec<EquivariantSpec> {
        self.layers.iter().map(EquivariantLayer::spec).collect()
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.parameters_mut())
            .collect()
    }

    /// Records the stack; the result is `total_elements x output_width`.
    pub fn record(&self, tape: &mut Tape, params: &[Var], batch: &SetBatch) -> Result<Var> {
        if batch.width() != self.input_width {
            return Err(Error::DimensionMismatch {
                expected: self.input_width,
                actual: batch.width(),
            });
        }
        let mut cursor = ParamCursor::new(params);
        let mut x = tape.constant(batch.elements().clone());
        for layer in &self.layers {
            x = layer.record(tape, &mut cursor, x, batch.segments())?;
        }
        cursor.finish()?;
        Ok(x)
    }

    pub fn forward(&self, batch: &SetBatch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self
            .parameters()
            .into_iter()
            .map(|p| tape.constant(p.clone()))
            .collect();
        let out = self.record(&mut tape, &params, batch)?;
        Ok(tape.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    fn scalar_layer(lambda: f64, gamma: f64) -> EquivariantLayer {
        EquivariantLayer {
            variant: EquivariantVariant::ScalarLambdaGamma,
            lambda: Some(Tensor::vector(vec![lambda]).unwrap()),
            gamma: Tensor::vector(vec![gamma]).unwrap(),
            beta: Tensor::zeros(&[1, 1]),
            activation: Activation::Identity,
        }
    }

    #[test]
    fn scalar_identity() {
        let y = scalar_layer(1.0, 0.0)
            .forward_set(&col(&[1.0, 2.0, 3.0]))
            .unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn scalar_sum_broadcast() {
        let y = scalar_layer(0.0, 1.0)
            .forward_set(&col(&[1.0, 2.0, 3.0]))
            .unwrap();
        assert_eq!(y.data(), &[6.0, 6.0, 6.0]);
    }

    #[test]
    fn maxpool_normalized_subtracts_max() {
        let layer = EquivariantLayer {
            variant: EquivariantVariant::MaxpoolNormalized,
            lambda: None,
            gamma: Tensor::identity(1),
            beta: Tensor::zeros(&[1, 1]),
            activation: Activation::Identity,
        };
        let y = layer.forward_set(&col(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.data(), &[-2.0, -1.0, 0.0]);
    }

    #[test]
    fn scalar_variant_needs_square_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = EquivariantSpec {
            width: 3,
            variant: EquivariantVariant::ScalarLambdaGamma,
            activation: Activation::Tanh,
        };
        assert!(EquivariantLayer::init(2, spec, &mut rng).is_err());
        assert!(EquivariantLayer::init(3, spec, &mut rng).is_ok());
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = EquivariantSpec {
            width: 4,
            variant: EquivariantVariant::FullLambdaGamma,
            activation: Activation::Tanh,
        };
        let layer = EquivariantLayer::init(3, spec, &mut rng).unwrap();
        assert!(layer.forward_set(&Tensor::zeros(&[5, 2])).is_err());
        assert_eq!(
            layer.forward_set(&Tensor::zeros(&[5, 3])).unwrap().shape(),
            &[5, 4]
        );
    }
}
