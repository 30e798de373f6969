use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    Elu,
}

impl Activation {
    pub fn record(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Elu => tape.elu(x, 1.0),
        }
    }
}

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Width and nonlinearity of one fully connected layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        LayerSpec { width, activation }
    }
}

/// `y = act(x W + b)` applied row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn init<R: Rng + ?Sized>(input: usize, spec: LayerSpec, rng: &mut R) -> Self {
        Dense {
            weight: Tensor::uniform(&[input, spec.width], glorot_bound(input, spec.width), rng),
            bias: Tensor::zeros(&[1, spec.width]),
            activation: spec.activation,
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_width(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn record(&self, tape: &mut Tape, params: &mut ParamCursor<'_>, x: Var) -> Result<Var> {
        let w = params.next()?;
        let b = params.next()?;
        let h = tape.matmul(x, w)?;
        let h = tape.add(h, b)?;
        self.activation.record(tape, h)
    }
}

/// A stack of dense layers.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn init<R: Rng + ?Sized>(input: usize, specs: &[LayerSpec], rng: &mut R) -> Self {
        let mut width = input;
        let layers = specs
            .iter()
            .map(|&s| {
                let d = Dense::init(width, s, rng);
                width = s.width;
                d
            })
            .collect();
        Mlp { layers }
    }

    pub fn output_width(&self, input: usize) -> usize {
        self.layers.last().map_or(input, Dense::output_width)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| LayerSpec::new(l.output_width(), l.activation))
            .collect()
    }

    pub fn record(&self, tape: &mut Tape, params: &mut ParamCursor<'_>, mut x: Var) -> Result<Var> {
        for layer in &self.layers {
            x = layer.record(tape, params, x)?;
        }
        Ok(x)
    }

    pub(crate) fn parameters(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub(crate) fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }
}

/// Hands out parameter leaves in the order a model lists its parameters.
pub struct ParamCursor<'a> {
    vars: std::slice::Iter<'a, Var>,
}

impl<'a> ParamCursor<'a> {
    pub fn new(vars: &'a [Var]) -> Self {
        ParamCursor { vars: vars.iter() }
    }

    pub fn next(&mut self) -> Result<Var> {
        self.vars
            .next()
            .copied()
            .ok_or_else(|| Error::invalid("model used more parameters than were bound"))
    }

    pub fn finish(mut self) -> Result<()> {
        match self.vars.next() {
            None => Ok(()),
            Some(_) => Err(Error::invalid("unused parameter leaves")),
        }
    }
}
