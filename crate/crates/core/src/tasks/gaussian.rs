//! Population-statistics tasks: each set is a Gaussian sample and the target
//! is an information-theoretic functional of its covariance.

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledSetDataset, SetMeta, Target};
use super::{set_rng, task_rng};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Smallest eigenvalue a sampling covariance may have.
pub const MIN_EIGENVALUE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaussianKind {
    /// `N(0, R(a) S R(a)^T)` in 2-d, `a ~ U[0, pi]`; target: entropy of the
    /// first marginal.
    Rotation,
    /// `N(0, [[S, aS], [aS, S]])` with `S` of size `d`; target: mutual
    /// information between the two halves.
    Correlation,
    /// `N(0, I + l v v^T)`, `l ~ U(0, 1)`; target: total correlation.
    Rank1,
    /// `N(0, S)` with a fresh random `S` per set; target: total correlation.
    Random,
}

impl GaussianKind {
    pub fn name(self) -> &'static str {
        match self {
            GaussianKind::Rotation => "rotation",
            GaussianKind::Correlation => "correlation",
            GaussianKind::Rank1 => "rank1",
            GaussianKind::Random => "random",
        }
    }

    pub fn default_dim(self) -> usize {
        match self {
            GaussianKind::Rotation => 2,
            GaussianKind::Correlation => 16,
            GaussianKind::Rank1 | GaussianKind::Random => 32,
        }
    }

    /// Width of each element (the correlation task doubles `d`).
    pub fn element_width(self, d: usize) -> usize {
        match self {
            GaussianKind::Correlation => 2 * d,
            _ => d,
        }
    }

    fn target_name(self) -> &'static str {
        match self {
            GaussianKind::Rotation => "marginal-entropy",
            GaussianKind::Correlation => "mutual-information",
            GaussianKind::Rank1 | GaussianKind::Random => "total-correlation",
        }
    }
}

impl std::str::FromStr for GaussianKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            GaussianKind::Rotation,
            GaussianKind::Correlation,
            GaussianKind::Rank1,
            GaussianKind::Random,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::invalid(format!("unknown Gaussian task {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianTaskSpec {
    pub kind: GaussianKind,
    pub d: usize,
    /// Inclusive range of set sizes.
    pub set_size_range: (usize, usize),
    pub num_sets: usize,
    pub seed: u64,
    /// Pins the per-set parameter (angle, correlation or rank-one
    /// strength) instead of sampling it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
}

impl GaussianTaskSpec {
    pub fn new(kind: GaussianKind, num_sets: usize, seed: u64) -> Self {
        GaussianTaskSpec {
            kind,
            d: kind.default_dim(),
            set_size_range: (300, 500),
            num_sets,
            seed,
            param: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.set_size_range;
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!("bad set size range [{lo}, {hi}]")));
        }
        if self.d == 0 || (self.kind == GaussianKind::Rotation && self.d != 2) {
            return Err(Error::invalid(format!(
                "{} task cannot use d = {}",
                self.kind.name(),
                self.d
            )));
        }
        if let Some(p) = self.param {
            let ok = match self.kind {
                GaussianKind::Rotation => p.is_finite(),
                GaussianKind::Correlation => p.abs() < 1.0,
                GaussianKind::Rank1 => p >= 0.0 && p.is_finite(),
                GaussianKind::Random => false,
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "parameter {p} invalid for {}",
                    self.kind.name()
                )));
            }
        }
        Ok(())
    }
}

/// `A A^T / d + 1e-3 I` with standard normal `A`.
pub fn random_covariance<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&a * a.transpose()) / d as f64 + DMatrix::identity(d, d) * 1e-3
}

pub fn rotation(alpha: f64) -> DMatrix<f64> {
    let (s, c) = alpha.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Lower Cholesky factor after checking the spectrum.
fn sampling_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let min = SymmetricEigen::new(cov.clone()).eigenvalues.min();
    if !(min >= MIN_EIGENVALUE) {
        return Err(Error::NotPositiveDefinite(min));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite(min))?;
    Ok(chol.l())
}

fn log_det(cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite(f64::NAN))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Differential entropy of `N(mu, var)`.
pub fn gaussian_entropy(var: f64) -> f64 {
    0.5 * (2.0 * PI * E * var).ln()
}

/// Mutual information between the first `k` coordinates and the rest.
pub fn gaussian_mutual_information(cov: &DMatrix<f64>, k: usize) -> Result<f64> {
    let n = cov.nrows();
    let a = cov.view((0, 0), (k, k)).into_owned();
    let b = cov.view((k, k), (n - k, n - k)).into_owned();
    Ok(0.5 * (log_det(&a)? + log_det(&b)? - log_det(cov)?))
}

/// `0.5 (sum_i ln S_ii - ln det S)`.
pub fn total_correlation(cov: &DMatrix<f64>) -> Result<f64> {
    let diag: f64 = cov.diagonal().iter().map(|v| v.ln()).sum();
    Ok(0.5 * (diag - log_det(cov)?))
}

pub fn gen_population_task(spec: &GaussianTaskSpec) -> Result<LabeledSetDataset> {
    spec.validate()?;
    let d = spec.d;
    let mut shared = task_rng(spec.seed);
    let base = match spec.kind {
        GaussianKind::Rotation | GaussianKind::Correlation => {
            Some(random_covariance(d, &mut shared))
        }
        _ => None,
    };
    let v = DMatrix::from_fn(d, 1, |_, _| shared.sample::<f64, _>(StandardNormal));

    let mut sets = Vec::with_capacity(spec.num_sets);
    let mut targets = Vec::with_capacity(spec.num_sets);
    let mut meta = Vec::with_capacity(spec.num_sets);
    for i in 0..spec.num_sets {
        let mut rng = set_rng(spec.seed, i);
        let (cov, param, target) = match spec.kind {
            GaussianKind::Rotation => {
                let alpha = spec.param.unwrap_or_else(|| rng.random_range(0.0..=PI));
                let r = rotation(alpha);
                let cov = &r * base.as_ref().expect("rotation base") * r.transpose();
                let h = gaussian_entropy(cov[(0, 0)]);
                (cov, Some(alpha), h)
            }
            GaussianKind::Correlation => {
                // |a| near 1 makes the joint covariance singular
                let alpha = spec.param.unwrap_or_else(|| rng.random_range(-0.99..0.99));
                let s = base.as_ref().expect("correlation base");
                let mut cov = DMatrix::zeros(2 * d, 2 * d);
                cov.view_mut((0, 0), (d, d)).copy_from(s);
                cov.view_mut((d, d), (d, d)).copy_from(s);
                cov.view_mut((0, d), (d, d)).copy_from(&(s * alpha));
                cov.view_mut((d, 0), (d, d)).copy_from(&(s * alpha));
                let mi = gaussian_mutual_information(&cov, d)?;
                (cov, Some(alpha), mi)
            }
            GaussianKind::Rank1 => {
                let lambda = spec.param.unwrap_or_else(|| rng.random_range(0.0..1.0));
                let cov = DMatrix::identity(d, d) + &v * v.transpose() * lambda;
                let tc = total_correlation(&cov)?;
                (cov, Some(lambda), tc)
            }
            GaussianKind::Random => {
                let cov = random_covariance(d, &mut rng);
                let tc = total_correlation(&cov)?;
                (cov, None, tc)
            }
        };
        let l = sampling_factor(&cov)?;
        let (lo, hi) = spec.set_size_range;
        let m = rng.random_range(lo..=hi);
        let width = cov.nrows();
        let z = DMatrix::from_fn(width, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        // columns of L z are samples; their transpose is the M x D set
        let x = (l * z).transpose();
        let mut data = Vec::with_capacity(m * width);
        for r in 0..m {
            data.extend(x.row(r).iter());
        }
        sets.push(Tensor::new(vec![m, width], data)?);
        targets.push(Target::Scalar(target));
        meta.push(SetMeta {
            task: spec.kind.name().into(),
            target: spec.kind.target_name().into(),
            param,
        });
    }
    LabeledSetDataset::new(sets, targets, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_of_unit_gaussian() {
        assert!((gaussian_entropy(1.0) - 1.418939).abs() < 1e-6);
    }

    #[test]
    fn identity_rotation_target_is_constant() {
        for alpha in [0.0, 0.3, 2.0] {
            let r = rotation(alpha);
            let cov = &r * DMatrix::<f64>::identity(2, 2) * r.transpose();
            assert!((gaussian_entropy(cov[(0, 0)]) - 1.418939).abs() < 1e-6);
        }
    }

    #[test]
    fn pairwise_mutual_information() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let mi = gaussian_mutual_information(&cov, 1).unwrap();
        assert!((mi - 0.143841).abs() < 1e-6);
        assert!((mi + 0.5 * (0.75f64).ln()).abs() < 1e-14);
        // total correlation coincides with pairwise MI in two dimensions
        assert!((total_correlation(&cov).unwrap() - mi).abs() < 1e-14);
    }

    #[test]
    fn rejects_singular_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            sampling_factor(&cov),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn correlation_at_zero_has_zero_target() {
        let mut spec = GaussianTaskSpec::new(GaussianKind::Correlation, 3, 4);
        spec.param = Some(0.0);
        spec.set_size_range = (10, 12);
        let ds = gen_population_task(&spec).unwrap();
        assert_eq!(ds.width(), Some(32));
        for t in ds.scalar_targets().unwrap() {
            assert!(t.abs() < 1e-10, "{t}");
        }
    }

    #[test]
    fn spec_validation() {
        let mut spec = GaussianTaskSpec::new(GaussianKind::Rotation, 1, 0);
        spec.d = 3;
        assert!(gen_population_task(&spec).is_err());
        let mut spec = GaussianTaskSpec::new(GaussianKind::Correlation, 1, 0);
        spec.param = Some(1.0);
        assert!(gen_population_task(&spec).is_err());
        let mut spec = GaussianTaskSpec::new(GaussianKind::Random, 1, 0);
        spec.set_size_range = (5, 4);
        assert!(gen_population_task(&spec).is_err());
    }
}
