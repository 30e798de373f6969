//! Explicit `rho(sum_x phi(x))` constructions for familiar symmetric
//! functions, each paired with a direct reference evaluation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClosedForm {
    /// `phi(x) = [1, x]`, `rho([u, v]) = v / u`.
    Mean,
    /// `phi(x) = [e^{a x}, x e^{a x}]`, `rho([u, v]) = v / u`.
    MaxSmooth,
    /// `phi(x) = [e^{a x}, x e^{a x}]`,
    /// `rho([u, v]) = (v - (v/u) e^{a v/u}) / (u - e^{a v/u})`.
    SecondLargestSmooth,
    /// `x1 x2 (x1 + x2 + 3)` with `phi(x) = [x, x^2, x^3]`,
    /// `rho([u, v, w]) = u v - w + 3 (u^2 - v) / 2`.
    PolyX1X2,
    /// `x1 x2 x3 + x1 + x2 + x3` with `phi(x) = [x, x^2, x^3]`,
    /// `rho([u, v, w]) = (u^3 + 2 w - 3 u v) / 6 + u`.
    PolySym3,
}

impl ClosedForm {
    pub const ALL: [ClosedForm; 5] = [
        ClosedForm::Mean,
        ClosedForm::MaxSmooth,
        ClosedForm::SecondLargestSmooth,
        ClosedForm::PolyX1X2,
        ClosedForm::PolySym3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClosedForm::Mean => "mean",
            ClosedForm::MaxSmooth => "max_smooth",
            ClosedForm::SecondLargestSmooth => "second_largest_smooth",
            ClosedForm::PolyX1X2 => "poly_x1x2",
            ClosedForm::PolySym3 => "poly_sym3",
        }
    }

    pub fn needs_alpha(self) -> bool {
        matches!(
            self,
            ClosedForm::MaxSmooth | ClosedForm::SecondLargestSmooth
        )
    }

    /// Set size the polynomial examples are defined for.
    pub fn fixed_size(self) -> Option<usize> {
        match self {
            ClosedForm::PolyX1X2 => Some(2),
            ClosedForm::PolySym3 => Some(3),
            _ => None,
        }
    }
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClosedForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClosedForm::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown closed form {s:?}")))
    }
}

/// Construction value next to its direct reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedFormValue {
    pub construction: f64,
    pub reference: f64,
}

impl ClosedFormValue {
    pub fn error(&self) -> f64 {
        (self.construction - self.reference).abs()
    }
}

fn sum_phi<const K: usize>(xs: &[f64], phi: impl Fn(f64) -> [f64; K]) -> [f64; K] {
    xs.iter().fold([0.0; K], |mut acc, &x| {
        for (a, v) in acc.iter_mut().zip(phi(x)) {
            *a += v;
        }
        acc
    })
}

/// Evaluates the named construction on `xs`.
pub fn closed_form_eval(
    name: ClosedForm,
    xs: &[f64],
    alpha: Option<f64>,
) -> Result<ClosedFormValue> {
    if xs.is_empty() {
        return Err(Error::invalid("closed forms need a non-empty set"));
    }
    if let Some(m) = name.fixed_size() {
        if xs.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: xs.len(),
            });
        }
    }
    let alpha = match (name.needs_alpha(), alpha) {
        (true, Some(a)) if a > 0.0 && a.is_finite() => a,
        (true, _) => return Err(Error::invalid(format!("{name} needs a positive alpha"))),
        (false, _) => 0.0,
    };
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let smooth_phi = |x: f64| {
        let w = (alpha * x).exp();
        [w, x * w]
    };
    let value = match name {
        ClosedForm::Mean => {
            let [u, v] = sum_phi(xs, |x| [1.0, x]);
            ClosedFormValue {
                construction: v / u,
                reference: xs.iter().sum::<f64>() / xs.len() as f64,
            }
        }
        ClosedForm::MaxSmooth => {
            let [u, v] = sum_phi(xs, smooth_phi);
            ClosedFormValue {
                construction: v / u,
                reference: sorted[sorted.len() - 1],
            }
        }
        ClosedForm::SecondLargestSmooth => {
            if xs.len() < 2 {
                return Err(Error::invalid("second largest needs at least two elements"));
            }
            let [u, v] = sum_phi(xs, smooth_phi);
            let t = (alpha * v / u).exp();
            ClosedFormValue {
                construction: (v - (v / u) * t) / (u - t),
                reference: sorted[sorted.len() - 2],
            }
        }
        ClosedForm::PolyX1X2 => {
            let [u, v, w] = sum_phi(xs, |x| [x, x * x, x * x * x]);
            let (a, b) = (xs[0], xs[1]);
            ClosedFormValue {
                construction: u * v - w + 3.0 * (u * u - v) / 2.0,
                reference: a * b * (a + b + 3.0),
            }
        }
        ClosedForm::PolySym3 => {
            let [u, v, w] = sum_phi(xs, |x| [x, x * x, x * x * x]);
            let (a, b, c) = (xs[0], xs[1], xs[2]);
            ClosedFormValue {
                construction: (u * u * u + 2.0 * w - 3.0 * u * v) / 6.0 + u,
                reference: a * b * c + a + b + c,
            }
        }
    };
    if !value.construction.is_finite() {
        return Err(Error::NonFinite { op: name.name() });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for c in ClosedForm::ALL {
            assert_eq!(c.name().parse::<ClosedForm>().unwrap(), c);
        }
        assert!("median".parse::<ClosedForm>().is_err());
    }

    #[test]
    fn mean_example() {
        let v = closed_form_eval(ClosedForm::Mean, &[0.2, 0.4], None).unwrap();
        assert!((v.construction - 0.3).abs() < 1e-15);
    }

    #[test]
    fn max_smooth_example() {
        let v = closed_form_eval(ClosedForm::MaxSmooth, &[0.1, 0.9], Some(50.0)).unwrap();
        assert!((v.construction - 0.9).abs() <= 0.02, "{v:?}");
        assert_eq!(v.reference, 0.9);
    }

    #[test]
    fn max_smooth_error_shrinks_with_alpha() {
        let xs = [0.05, 0.3, 0.31, 0.62, 0.7, 0.74];
        let errs: Vec<f64> = [10.0, 50.0, 200.0]
            .iter()
            .map(|&a| {
                closed_form_eval(ClosedForm::MaxSmooth, &xs, Some(a))
                    .unwrap()
                    .error()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn poly_x1x2_example() {
        let v = closed_form_eval(ClosedForm::PolyX1X2, &[1.0, 2.0], None).unwrap();
        assert_eq!(v.construction, 12.0);
        assert_eq!(v.reference, 12.0);
    }

    #[test]
    fn poly_sym3_matches_reference() {
        let v = closed_form_eval(ClosedForm::PolySym3, &[1.0, 2.0, 3.0], None).unwrap();
        assert_eq!(v.reference, 12.0);
        assert_eq!(v.construction, 12.0);
        let v = closed_form_eval(ClosedForm::PolySym3, &[0.3, 0.7, 0.1], None).unwrap();
        assert!(v.error() <= 1e-12, "{v:?}");
    }

    #[test]
    fn second_largest_construction_reduces_to_smooth_max() {
        // the numerator is (v/u) times the denominator; u - e^{a v/u}
        // cancels badly for large alpha, hence the loose tolerance
        let xs = [0.2, 0.55, 0.9];
        for alpha in [1.0, 5.0, 10.0, 50.0] {
            let second =
                closed_form_eval(ClosedForm::SecondLargestSmooth, &xs, Some(alpha)).unwrap();
            let max = closed_form_eval(ClosedForm::MaxSmooth, &xs, Some(alpha)).unwrap();
            let diff = (second.construction - max.construction).abs();
            assert!(diff <= 1e-6, "alpha {alpha}: {diff}");
            assert_eq!(second.reference, 0.55);
        }
    }

    #[test]
    fn argument_checks() {
        assert!(closed_form_eval(ClosedForm::MaxSmooth, &[0.1], None).is_err());
        assert!(closed_form_eval(ClosedForm::PolyX1X2, &[0.1, 0.2, 0.3], None).is_err());
        assert!(closed_form_eval(ClosedForm::Mean, &[], None).is_err());
        assert!(closed_form_eval(ClosedForm::SecondLargestSmooth, &[0.4], Some(5.0)).is_err());
    }
}
