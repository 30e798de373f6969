//! Architecture descriptors, the model enum used by training, and the JSON
//! model file format.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::SetBatch;
use super::dense::LayerSpec;
use super::equivariant::{EquivariantSpec, EquivariantStack, EquivariantVariant};
use super::invariant::{InvariantModel, InvariantSpec};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    Invariant(InvariantSpec),
    Equivariant {
        input_width: usize,
        layers: Vec<EquivariantSpec>,
    },
}

impl Architecture {
    pub fn input_width(&self) -> usize {
        match self {
            Architecture::Invariant(s) => s.input_width,
            Architecture::Equivariant { input_width, .. } => *input_width,
        }
    }

    /// Scalar parameter count computed without building the model; `None`
    /// when it overflows.
    pub fn parameter_count(&self) -> Option<usize> {
        // dense layers: weight [in, out] and bias [1, out]
        let mlp = |input: usize, layers: &[LayerSpec]| {
            layers.iter().try_fold((0usize, input), |(n, width), l| {
                let here = width.checked_add(1)?.checked_mul(l.width)?;
                Some((n.checked_add(here)?, l.width))
            })
        };
        match self {
            Architecture::Invariant(s) => {
                let (phi, width) = mlp(s.input_width, &s.phi)?;
                let (rho, _) = mlp(width.checked_add(s.condition.width())?, &s.rho)?;
                phi.checked_add(rho)
            }
            Architecture::Equivariant {
                input_width,
                layers,
            } => layers
                .iter()
                .try_fold((0usize, *input_width), |(n, width), l| {
                    let weights = match l.variant {
                        EquivariantVariant::ScalarLambdaGamma => 2,
                        EquivariantVariant::MaxpoolNormalized => width.checked_mul(l.width)?,
                        EquivariantVariant::FullLambdaGamma
                        | EquivariantVariant::MaxpoolLambdaGamma => {
                            width.checked_mul(l.width)?.checked_mul(2)?
                        }
                    };
                    let here = weights.checked_add(l.width)?;
                    Some((n.checked_add(here)?, l.width))
                })
                .map(|(n, _)| n),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SetModel {
    Invariant(InvariantModel),
    Equivariant(EquivariantStack),
}

impl SetModel {
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        match arch {
            Architecture::Invariant(spec) => {
                Ok(SetModel::Invariant(InvariantModel::init(spec, rng)?))
            }
            Architecture::Equivariant {
                input_width,
                layers,
            } => Ok(SetModel::Equivariant(EquivariantStack::init(
                *input_width,
                layers,
                rng,
            )?)),
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            SetModel::Invariant(m) => Architecture::Invariant(m.spec()),
            SetModel::Equivariant(s) => Architecture::Equivariant {
                input_width: s.input_width,
                layers: s.specs(),
            },
        }
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        match self {
            SetModel::Invariant(m) => m.parameters(),
            SetModel::Equivariant(s) => s.parameters(),
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            SetModel::Invariant(m) => m.parameters_mut(),
            SetModel::Equivariant(s) => s.parameters_mut(),
        }
    }

    /// Columns of the forward output.
    pub fn output_width(&self) -> usize {
        match self {
            SetModel::Invariant(m) => m.output_width(),
            SetModel::Equivariant(s) => s.output_width(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Invariant models give one row per set; equivariant stacks one row
    /// per element.
    pub fn record(&self, tape: &mut Tape, params: &[Var], batch: &SetBatch) -> Result<Var> {
        match self {
            SetModel::Invariant(m) => m.record(tape, params, batch),
            SetModel::Equivariant(s) => s.record(tape, params, batch),
        }
    }

    pub fn forward(&self, batch: &SetBatch) -> Result<Tensor> {
        match self {
            SetModel::Invariant(m) => m.forward(batch),
            SetModel::Equivariant(s) => s.forward(batch),
        }
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            architecture: self.architecture(),
            parameters: self.parameters().into_iter().cloned().collect(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        // checked before building so a small file cannot demand a huge model
        let supplied: usize = file.parameters.iter().map(Tensor::len).sum();
        if file.architecture.parameter_count() != Some(supplied) {
            return Err(Error::invalid(format!(
                "architecture needs {} parameters, file has {supplied}",
                file.architecture
                    .parameter_count()
                    .map_or("an overflowing number of".to_string(), |n| n.to_string())
            )));
        }
        // Initial values are overwritten below; the seed is irrelevant.
        let mut model = SetModel::init(&file.architecture, &mut ChaCha8Rng::seed_from_u64(0))?;
        let slots = model.parameters_mut();
        if slots.len() != file.parameters.len() {
            return Err(Error::invalid(format!(
                "architecture has {} parameter tensors, file has {}",
                slots.len(),
                file.parameters.len()
            )));
        }
        for (i, (slot, value)) in slots.into_iter().zip(file.parameters).enumerate() {
            if slot.shape() != value.shape() {
                return Err(Error::shape(
                    "model file",
                    format!(
                        "parameter {i} has shape {:?}, architecture needs {:?}",
                        value.shape(),
                        slot.shape()
                    ),
                ));
            }
            if !value.all_finite() {
                return Err(Error::invalid(format!("parameter {i} is not finite")));
            }
            *slot = value;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        SetModel::from_file(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        SetModel::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk model: architecture descriptor plus parameter tensors in the
/// order [`SetModel::parameters`] lists them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub architecture: Architecture,
    pub parameters: Vec<Tensor>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Activation, ConditionMode, EquivariantVariant, LayerSpec, Pool};

    fn archs() -> Vec<Architecture> {
        vec![
            Architecture::Invariant(InvariantSpec {
                input_width: 3,
                phi: vec![LayerSpec::new(5, Activation::Relu)],
                pool: Pool::Max,
                rho: vec![LayerSpec::new(2, Activation::Identity)],
                condition: ConditionMode::ConcatAfterPool { width: 2 },
            }),
            Architecture::Equivariant {
                input_width: 2,
                layers: vec![
                    EquivariantSpec {
                        width: 2,
                        variant: EquivariantVariant::ScalarLambdaGamma,
                        activation: Activation::Tanh,
                    },
                    EquivariantSpec {
                        width: 4,
                        variant: EquivariantVariant::MaxpoolNormalized,
                        activation: Activation::Elu,
                    },
                    EquivariantSpec {
                        width: 1,
                        variant: EquivariantVariant::FullLambdaGamma,
                        activation: Activation::Identity,
                    },
                ],
            },
        ]
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for arch in archs() {
            let model = SetModel::init(&arch, &mut rng).unwrap();
            let back = SetModel::from_json(&model.to_json().unwrap()).unwrap();
            for (a, b) in model.parameters().iter().zip(back.parameters()) {
                let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(a), bits(b));
            }
            assert_eq!(back.architecture(), arch);
        }
    }

    #[test]
    fn counts_parameters_without_building() {
        let mut all = archs();
        all.push(Architecture::Equivariant {
            input_width: 3,
            layers: vec![EquivariantSpec {
                width: 2,
                variant: EquivariantVariant::MaxpoolLambdaGamma,
                activation: Activation::Relu,
            }],
        });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for arch in all {
            let model = SetModel::init(&arch, &mut rng).unwrap();
            assert_eq!(arch.parameter_count(), Some(model.parameter_count()));
        }
        let huge = Architecture::Invariant(InvariantSpec {
            input_width: usize::MAX / 2,
            phi: vec![LayerSpec::new(1 << 40, Activation::Relu)],
            pool: Pool::Sum,
            rho: vec![],
            condition: ConditionMode::None,
        });
        assert_eq!(huge.parameter_count(), None);
        let wide = Architecture::Invariant(InvariantSpec {
            input_width: 100_000,
            phi: vec![LayerSpec::new(100_000, Activation::Relu)],
            pool: Pool::Sum,
            rho: vec![],
            condition: ConditionMode::None,
        });
        let file = ModelFile {
            architecture: wide,
            parameters: vec![],
        };
        assert!(SetModel::from_file(file).is_err());
    }

    #[test]
    fn rejects_wrong_parameter_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = SetModel::init(&archs()[0], &mut rng).unwrap();
        let mut file = model.to_file();
        file.parameters[0] = Tensor::zeros(&[1, 1]);
        assert!(SetModel::from_file(file.clone()).is_err());
        file.parameters.pop();
        assert!(SetModel::from_file(file).is_err());
    }

    #[test]
    fn architecture_json_shape() {
        let json = serde_json::to_value(&archs()[0]).unwrap();
        assert_eq!(json["kind"], "invariant");
        assert_eq!(json["pool"], "max");
        assert_eq!(json["condition"]["mode"], "concat-after-pool");
        assert_eq!(json["phi"][0]["activation"], "relu");
    }
}
