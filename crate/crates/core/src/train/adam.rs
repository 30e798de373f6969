//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!(
                "step size {} must be positive",
                self.step_size
            )));
        }
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::invalid(format!(
                "betas ({}, {}) must lie in [0, 1)",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Optimizer state: one first and second moment per parameter entry.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    steps: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[&Tensor]) -> Result<Self> {
        config.validate()?;
        Ok(Adam {
            config,
            steps: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// `theta -= a * m_hat / (sqrt(v_hat) + eps)` for every parameter.
    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.shape() != p.shape() {
                return Err(Error::shape(
                    "adam",
                    format!("parameter {i} {:?} vs gradient {:?}", p.shape(), g.shape()),
                ));
            }
        }
        self.steps += 1;
        let AdamConfig {
            step_size,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.steps as f64;
        let c1 = 1.0 - beta1.powf(t);
        let c2 = 1.0 - beta2.powf(t);
        for ((p, g), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                *x -= step_size * (*mi / c1) / ((*vi / c2).sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_step_size() {
        // with bias correction the first update is a * g / (|g| + eps)
        let mut p = Tensor::vector(vec![1.0, -2.0, 0.5]).unwrap();
        let g = Tensor::vector(vec![0.3, -4.0, 0.0]).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &[&p]).unwrap();
        adam.step(vec![&mut p], &[&g]).unwrap();
        let expect = [
            1.0 - 1e-3 * 0.3 / (0.3 + 1e-8),
            -2.0 + 1e-3 * 4.0 / (4.0 + 1e-8),
            0.5,
        ];
        for (a, b) in p.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn matches_scalar_reference_over_many_steps() {
        let cfg = AdamConfig {
            step_size: 0.05,
            ..AdamConfig::default()
        };
        let mut p = Tensor::vector(vec![3.0]).unwrap();
        let mut adam = Adam::new(cfg, &[&p]).unwrap();
        let (mut x, mut m, mut v) = (3.0f64, 0.0f64, 0.0f64);
        for t in 1..=200 {
            // gradient of (x - 1)^2
            let g = 2.0 * (p.data()[0] - 1.0);
            adam.step(vec![&mut p], &[&Tensor::vector(vec![g]).unwrap()])
                .unwrap();
            let gr = 2.0 * (x - 1.0);
            m = 0.9 * m + 0.1 * gr;
            v = 0.999 * v + 0.001 * gr * gr;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.05 * mh / (vh.sqrt() + 1e-8);
            assert!((p.data()[0] - x).abs() < 1e-12);
        }
        assert!((x - 1.0).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_settings_and_shapes() {
        let p = Tensor::vector(vec![1.0]).unwrap();
        for cfg in [
            AdamConfig {
                step_size: 0.0,
                ..AdamConfig::default()
            },
            AdamConfig {
                beta1: 1.0,
                ..AdamConfig::default()
            },
            AdamConfig {
                beta2: -0.1,
                ..AdamConfig::default()
            },
            AdamConfig {
                epsilon: 0.0,
                ..AdamConfig::default()
            },
        ] {
            assert!(Adam::new(cfg, &[&p]).is_err());
        }
        let mut q = p.clone();
        let mut adam = Adam::new(AdamConfig::default(), &[&p]).unwrap();
        let g = Tensor::vector(vec![1.0, 2.0]).unwrap();
        assert!(adam.step(vec![&mut q], &[&g]).is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: AdamConfig = serde_json::from_str(r#"{"step_size": 0.01}"#).unwrap();
        assert_eq!(cfg.beta2, 0.999);
        assert!(serde_json::from_str::<AdamConfig>(r#"{"lr": 0.01}"#).is_err());
    }
}
