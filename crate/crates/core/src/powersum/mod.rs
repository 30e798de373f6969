//! Constructive side of the sum-decomposition results.
//!
//! * [`countable_encode`]: `sum 4^{-c(x)}` identifies every subset of a
//!   countable universe.
//! * [`embed`]: for `M` numbers in `[0, 1]`, the power sums
//!   `Z_q = sum_m x_m^q`, `q = 0..=M`, determine the multiset.
//! * [`newton_girard`] + [`poly_roots`] = [`invert`]: recover the multiset
//!   from its power sums through the elementary symmetric polynomials and
//!   the roots of `prod_m (x - x_m)`.
//! * [`closed_form`]: explicit `rho(sum phi(x))` constructions for a few
//!   familiar symmetric functions.

pub mod closed_form;
mod roots;

pub use closed_form::{closed_form_eval, ClosedForm, ClosedFormValue};
pub use roots::{poly_roots, RootOptions};

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Largest code for which sums of distinct powers of 4 stay exact in `f64`.
pub const MAX_CODE: u32 = 26;
pub const MAX_UNIVERSE: usize = 20;
/// Largest set size handled by [`invert`].
pub const MAX_SET_SIZE: usize = 16;

/// `sum_{x in set} 4^{-code[x]}`, where `set` holds indices into the
/// universe `0..code.len()`.
pub fn countable_encode(set: impl IntoIterator<Item = usize>, code: &[u32]) -> Result<f64> {
    if code.len() > MAX_UNIVERSE {
        return Err(Error::invalid(format!(
            "universe of {} elements exceeds {MAX_UNIVERSE}",
            code.len()
        )));
    }
    let mut seen = std::collections::HashMap::new();
    for (element, &c) in code.iter().enumerate() {
        if c > MAX_CODE {
            return Err(Error::invalid(format!("code {c} exceeds {MAX_CODE}")));
        }
        if let Some(prev) = seen.insert(c, element) {
            return Err(Error::NonInjectiveCode(prev, element, c));
        }
    }
    let members: BTreeSet<usize> = set.into_iter().collect();
    let mut total = 0.0;
    for x in members {
        let c = *code
            .get(x)
            .ok_or_else(|| Error::invalid(format!("element {x} outside the universe")))?;
        total += 0.25f64.powi(c as i32);
    }
    Ok(total)
}

/// Non-decreasing sample of values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SortedSample {
    values: Vec<f64>,
}

impl SortedSample {
    /// Sorts `values`; fails if any lies outside `[0, 1]`.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("sample must be non-empty"));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("{v} is outside [0, 1]")));
        }
        values.sort_by(f64::total_cmp);
        Ok(SortedSample { values })
    }

    /// Maps arbitrary values affinely from `[lo, hi]` onto `[0, 1]`.
    pub fn rescaled(values: &[f64], lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::invalid(format!("empty range [{lo}, {hi}]")));
        }
        SortedSample::new(values.iter().map(|v| (v - lo) / (hi - lo)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Smallest gap between consecutive values (infinite for singletons).
    pub fn min_gap(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Power sums `Z_0..=Z_M` of an `M`-element multiset.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSumVector {
    sums: Vec<f64>,
}

impl PowerSumVector {
    /// `sums[0]` must be the (integral, positive) set size and
    /// `sums.len() == sums[0] + 1`.
    pub fn new(sums: Vec<f64>) -> Result<Self> {
        let z0 = *sums
            .first()
            .ok_or_else(|| Error::invalid("no power sums"))?;
        if !(z0 >= 1.0 && z0.fract() == 0.0) {
            return Err(Error::invalid(format!(
                "Z_0 = {z0} is not a positive integer"
            )));
        }
        if sums.len() != z0 as usize + 1 {
            return Err(Error::invalid(format!(
                "Z_0 = {z0} needs {} power sums, got {}",
                z0 as usize + 1,
                sums.len()
            )));
        }
        Ok(PowerSumVector { sums })
    }

    pub fn set_size(&self) -> usize {
        self.sums.len() - 1
    }

    /// `[Z_0, Z_1, ..., Z_M]`.
    pub fn sums(&self) -> &[f64] {
        &self.sums
    }
}

pub fn embed(sample: &SortedSample) -> PowerSumVector {
    let m = sample.len();
    let mut sums = vec![0.0; m + 1];
    sums[0] = m as f64;
    for &x in sample.values() {
        for (q, s) in sums.iter_mut().enumerate().skip(1) {
            *s += x.powi(q as i32);
        }
    }
    PowerSumVector { sums }
}

/// Elementary symmetric polynomials `e_1..=e_M` from power sums via
/// `k e_k = sum_{i=1..k} (-1)^{i-1} e_{k-i} p_i`.
pub fn newton_girard(z: &PowerSumVector) -> Vec<f64> {
    let p = z.sums();
    let m = z.set_size();
    let mut e = vec![0.0; m + 1];
    e[0] = 1.0;
    for k in 1..=m {
        let mut acc = 0.0;
        for i in 1..=k {
            let term = e[k - i] * p[i];
            if i % 2 == 1 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        e[k] = acc / k as f64;
    }
    e.remove(0);
    e
}

/// `Z_q(x) - Z_q` for `q = 1..=M`, with compensated summation.
fn power_residual(z: &PowerSumVector, x: &[f64]) -> Vec<f64> {
    (1..z.sums().len())
        .map(|q| {
            let (mut sum, mut comp) = (-z.sums()[q], 0.0);
            for &v in x {
                let term = v.powi(q as i32);
                let t = sum + term;
                comp += if sum.abs() >= term.abs() {
                    (sum - t) + term
                } else {
                    (term - t) + sum
                };
                sum = t;
            }
            sum + comp
        })
        .collect()
}

/// Newton steps on the power-sum equations themselves. Passing through the
/// polynomial coefficients loses accuracy the original sums still carry.
fn polish(z: &PowerSumVector, mut x: Vec<f64>) -> Vec<f64> {
    let m = x.len();
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut res = power_residual(z, &x);
    for _ in 0..4 {
        // J[q-1][j] = q x_j^{q-1}
        let jac = nalgebra::DMatrix::from_fn(m, m, |q, j| (q + 1) as f64 * x[j].powi(q as i32));
        let Some(step) = jac.lu().solve(&nalgebra::DVector::from_column_slice(&res)) else {
            break;
        };
        let next: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a - d).collect();
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        let next_res = power_residual(z, &next);
        if norm(&next_res) >= norm(&res) {
            break;
        }
        x = next;
        res = next_res;
    }
    x.sort_by(f64::total_cmp);
    x
}

/// Recovers the sorted sample whose power sums are `z`.
pub fn invert(z: &PowerSumVector) -> Result<SortedSample> {
    if z.set_size() > MAX_SET_SIZE {
        return Err(Error::invalid(format!(
            "set size {} exceeds {MAX_SET_SIZE}; power sums are too ill-conditioned",
            z.set_size()
        )));
    }
    let e = newton_girard(z);
    let roots = polish(z, poly_roots(&e, &RootOptions::default())?);
    // roundoff can push roots at the boundary marginally outside [0, 1]
    const SLACK: f64 = 1e-7;
    let clamped = roots
        .into_iter()
        .map(|r| {
            if (-SLACK..=1.0 + SLACK).contains(&r) {
                Ok(r.clamp(0.0, 1.0))
            } else {
                Err(Error::invalid(format!(
                    "root {r} outside [0, 1]: power sums are not the image of a sample"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    SortedSample::new(clamped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        let code = [1, 2, 3];
        assert_eq!(countable_encode([], &code).unwrap(), 0.0);
        assert_eq!(countable_encode([0, 2], &code).unwrap(), 0.265625);
        assert!(matches!(
            countable_encode([0], &[1, 1]),
            Err(Error::NonInjectiveCode(0, 1, 1))
        ));
        assert!(countable_encode([0], &[0; 21]).is_err());
    }

    #[test]
    fn encode_distinguishes_all_subsets_of_eight() {
        let code: Vec<u32> = (1..=8).collect();
        let mut values = BTreeSet::new();
        for mask in 0u32..256 {
            let set = (0..8).filter(|b| mask & (1 << b) != 0);
            values.insert(countable_encode(set, &code).unwrap().to_bits());
        }
        assert_eq!(values.len(), 256);
    }

    #[test]
    fn embed_examples() {
        let z = embed(&SortedSample::new(vec![0.5]).unwrap());
        assert_eq!(z.sums(), &[1.0, 0.5]);
        let z = embed(&SortedSample::new(vec![0.5, 0.2]).unwrap());
        assert_eq!(z.sums()[0], 2.0);
        assert!((z.sums()[1] - 0.7).abs() < 1e-15);
        assert!((z.sums()[2] - 0.29).abs() < 1e-15);
    }

    #[test]
    fn newton_girard_examples() {
        let e = newton_girard(&PowerSumVector::new(vec![3.0, 6.0, 14.0, 36.0]).unwrap());
        assert_eq!(e, vec![6.0, 11.0, 6.0]);
        let e = newton_girard(&PowerSumVector::new(vec![1.0, 0.7]).unwrap());
        assert_eq!(e, vec![0.7]);
        let e = newton_girard(&PowerSumVector::new(vec![2.0, 0.7, 0.29]).unwrap());
        assert!((e[0] - 0.7).abs() < 1e-15 && (e[1] - 0.10).abs() < 1e-15);
    }

    #[test]
    fn power_sum_vector_validation() {
        assert!(PowerSumVector::new(vec![]).is_err());
        assert!(PowerSumVector::new(vec![1.5, 0.2]).is_err());
        assert!(PowerSumVector::new(vec![2.0, 0.2]).is_err());
        assert!(PowerSumVector::new(vec![0.0]).is_err());
    }

    #[test]
    fn sample_validation_and_rescaling() {
        assert!(SortedSample::new(vec![0.2, 1.2]).is_err());
        assert!(SortedSample::new(vec![f64::NAN]).is_err());
        let s = SortedSample::new(vec![0.9, 0.1]).unwrap();
        assert_eq!(s.values(), &[0.1, 0.9]);
        let r = SortedSample::rescaled(&[10.0, 20.0, 15.0], 10.0, 20.0).unwrap();
        assert_eq!(r.values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn invert_examples() {
        let s = SortedSample::new(vec![0.25, 0.75]).unwrap();
        let back = invert(&embed(&s)).unwrap();
        assert!(back
            .values()
            .iter()
            .zip(s.values())
            .all(|(a, b)| (a - b).abs() < 1e-12));
        let back = invert(&embed(&SortedSample::new(vec![0.5]).unwrap())).unwrap();
        assert_eq!(back.values(), &[0.5]);
    }
}
