//! Digit-sum sets and outlier-selection sets.

use rand::Rng;
use rand_distr::StandardNormal;

use super::dataset::{LabeledSetDataset, SetMeta, Target};
use super::set_rng;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Digits are one-hot over `0..=9`.
pub const DIGIT_WIDTH: usize = 10;

/// Sets of one-hot digits labelled by their sum. Sizes are uniform in
/// `1..=max_set_size`, or all equal to `fixed_size` when given.
pub fn gen_digit_sum(
    num_sets: usize,
    max_set_size: usize,
    fixed_size: Option<usize>,
    seed: u64,
) -> Result<LabeledSetDataset> {
    if max_set_size == 0 || fixed_size == Some(0) {
        return Err(Error::invalid("digit sets need at least one element"));
    }
    let mut sets = Vec::with_capacity(num_sets);
    let mut targets = Vec::with_capacity(num_sets);
    for i in 0..num_sets {
        let mut rng = set_rng(seed, i);
        let m = fixed_size.unwrap_or_else(|| rng.random_range(1..=max_set_size));
        let mut data = vec![0.0; m * DIGIT_WIDTH];
        let mut sum = 0usize;
        for r in 0..m {
            let digit = rng.random_range(0..DIGIT_WIDTH);
            data[r * DIGIT_WIDTH + digit] = 1.0;
            sum += digit;
        }
        sets.push(Tensor::new(vec![m, DIGIT_WIDTH], data)?);
        targets.push(Target::Scalar(sum as f64));
    }
    let meta = vec![
        SetMeta {
            task: "digit-sum".into(),
            target: "sum".into(),
            param: None,
        };
        num_sets
    ];
    LabeledSetDataset::new(sets, targets, meta)
}

/// Decodes a one-hot digit row.
pub fn digit_of(row: &[f64]) -> Option<usize> {
    let mut hot = row.iter().enumerate().filter(|(_, &v)| v != 0.0);
    match (hot.next(), hot.next()) {
        (Some((d, &v)), None) if v == 1.0 => Some(d),
        _ => None,
    }
}

fn normal_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Sets of `m` points in `d` dimensions: `m - 1` from `N(mu, I)` and one
/// from `N(mu + shift * u, I)` at a random position, with per-set random
/// `mu ~ N(0, I)` and unit `u`. The target is the outlier's position.
pub fn gen_outlier_sets(
    num_sets: usize,
    m: usize,
    d: usize,
    shift: f64,
    seed: u64,
) -> Result<LabeledSetDataset> {
    if m < 2 || d == 0 {
        return Err(Error::invalid("outlier sets need m >= 2 and d >= 1"));
    }
    if !(shift >= 0.0 && shift.is_finite()) {
        return Err(Error::invalid(format!(
            "shift {shift} must be non-negative"
        )));
    }
    let mut sets = Vec::with_capacity(num_sets);
    let mut targets = Vec::with_capacity(num_sets);
    for i in 0..num_sets {
        let mut rng = set_rng(seed, i);
        let mu = normal_vec(&mut rng, d);
        let u = loop {
            let v = normal_vec(&mut rng, d);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                break v.into_iter().map(|x| x / n).collect::<Vec<_>>();
            }
        };
        let position = rng.random_range(0..m);
        let mut data = Vec::with_capacity(m * d);
        for r in 0..m {
            let noise = normal_vec(&mut rng, d);
            for j in 0..d {
                let offset = if r == position { shift * u[j] } else { 0.0 };
                data.push(mu[j] + offset + noise[j]);
            }
        }
        sets.push(Tensor::new(vec![m, d], data)?);
        targets.push(Target::Index { index: position });
    }
    let meta = vec![
        SetMeta {
            task: "outlier".into(),
            target: "outlier-index".into(),
            param: Some(shift),
        };
        num_sets
    ];
    LabeledSetDataset::new(sets, targets, meta)
}
