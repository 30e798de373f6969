//! The invariant model `rho(pool_{x in X} phi(x))`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::batch::SetBatch;
use super::dense::{LayerSpec, Mlp, ParamCursor};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Commutative reduction over the elements of each set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pool {
    Sum,
    Max,
    Mean,
}

impl Pool {
    pub fn record(self, tape: &mut Tape, x: Var, batch: &SetBatch) -> Result<Var> {
        match self {
            Pool::Sum => tape.segment_sum(x, batch.segments()),
            Pool::Max => tape.segment_max(x, batch.segments()),
            Pool::Mean => tape.segment_mean(x, batch.segments()),
        }
    }
}

/// How per-set side information `z` enters the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ConditionMode {
    #[default]
    None,
    /// `rho([pool(phi(X)), z])`.
    ConcatAfterPool { width: usize },
}

impl ConditionMode {
    pub fn width(self) -> usize {
        match self {
            ConditionMode::None => 0,
            ConditionMode::ConcatAfterPool { width } => width,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSpec {
    pub input_width: usize,
    pub phi: Vec<LayerSpec>,
    pub pool: Pool,
    pub rho: Vec<LayerSpec>,
    #[serde(default)]
    pub condition: ConditionMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantModel {
    pub input_width: usize,
    pub phi: Mlp,
    pub pool: Pool,
    pub rho: Mlp,
    pub condition: ConditionMode,
}

impl InvariantModel {
    pub fn init<R: Rng + ?Sized>(spec: &InvariantSpec, rng: &mut R) -> Result<Self> {
        if spec.input_width == 0 || spec.phi.iter().chain(&spec.rho).any(|l| l.width == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let phi = Mlp::init(spec.input_width, &spec.phi, rng);
        let pooled = phi.output_width(spec.input_width) + spec.condition.width();
        let rho = Mlp::init(pooled, &spec.rho, rng);
        Ok(InvariantModel {
            input_width: spec.input_width,
            phi,
            pool: spec.pool,
            rho,
            condition: spec.condition,
        })
    }

    pub fn spec(&self) -> InvariantSpec {
        InvariantSpec {
            input_width: self.input_width,
            phi: self.phi.specs(),
            pool: self.pool,
            rho: self.rho.specs(),
            condition: self.condition,
        }
    }

    pub fn output_width(&self) -> usize {
        let pooled = self.phi.output_width(self.input_width) + self.condition.width();
        self.rho.output_width(pooled)
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.phi.parameters().chain(self.rho.parameters()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.phi
            .parameters_mut()
            .chain(self.rho.parameters_mut())
            .collect()
    }

    /// Records the forward pass; the result is `num_sets x output_width`.
    pub fn record(&self, tape: &mut Tape, params: &[Var], batch: &SetBatch) -> Result<Var> {
        if batch.width() != self.input_width {
            return Err(Error::DimensionMismatch {
                expected: self.input_width,
                actual: batch.width(),
            });
        }
        let mut cursor = ParamCursor::new(params);
        let x = tape.constant(batch.elements().clone());
        let h = self.phi.record(tape, &mut cursor, x)?;
        let mut pooled = self.pool.record(tape, h, batch)?;
        match (self.condition, batch.condition()) {
            (ConditionMode::None, None) => {}
            (ConditionMode::ConcatAfterPool { width }, Some(z)) => {
                if z.cols() != width {
                    return Err(Error::DimensionMismatch {
                        expected: width,
                        actual: z.cols(),
                    });
                }
                let z = tape.constant(z.clone());
                pooled = tape.concat(&[pooled, z], 1)?;
            }
            (ConditionMode::None, Some(_)) => {
                return Err(Error::invalid(
                    "model takes no condition but batch carries one",
                ))
            }
            (ConditionMode::ConcatAfterPool { .. }, None) => {
                return Err(Error::invalid("model requires a condition the batch lacks"))
            }
        }
        let out = self.rho.record(tape, &mut cursor, pooled)?;
        cursor.finish()?;
        Ok(out)
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
