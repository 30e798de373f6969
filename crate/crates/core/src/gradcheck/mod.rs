//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

mod probe;

pub use probe::{probe, tolerance, Probe, ProbeLoss};

/// Coordinates sampled per parameter tensor when it has more entries.
pub const DEFAULT_SAMPLES: usize = 12;

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.value(loss)
        .item()
        .ok_or_else(|| Error::NotScalar(tape.value(loss).shape().to_vec()))
}

/// Maximum over sampled coordinates of
/// `|analytic - central difference| / max(1, |analytic|)`.
///
/// `f` builds a scalar loss from the parameter leaves it is handed. Up to
/// `samples` coordinates per tensor are checked (all of them for small
/// tensors), chosen by a generator seeded with `seed`.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64, samples: usize, seed: u64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0 && step <= 1e-2) {
        return Err(Error::invalid(format!(
            "finite-difference step {step} not in (0, 1e-2]"
        )));
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let first = tape
        .value(loss)
        .item()
        .ok_or_else(|| Error::NotScalar(tape.value(loss).shape().to_vec()))?;
    let second = evaluate(&f, params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }
    let grads = tape.backward(loss)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut perturbed = params.to_vec();
    for (t, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .expect("trainable leaves always receive a gradient");
        let n = params[t].len();
        let coords: Vec<usize> = if n <= samples {
            (0..n).collect()
        } else {
            sample(&mut rng, n, samples).into_vec()
        };
        for i in coords {
            let base = params[t].data()[i];
            perturbed[t].data_mut()[i] = base + step;
            let up = evaluate(&f, &perturbed)?;
            perturbed[t].data_mut()[i] = base - step;
            let down = evaluate(&f, &perturbed)?;
            perturbed[t].data_mut()[i] = base;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[i];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        // f(x) = x^2 at x = 3: analytic 6
        let x = Tensor::new(vec![1, 1], vec![3.0]).unwrap();
        let f = |tape: &mut Tape, p: &[Var]| tape.matmul(p[0], p[0]);
        let mut tape = Tape::new();
        let v = tape.param(x.clone());
        let y = f(&mut tape, &[v]).unwrap();
        assert_eq!(tape.backward(y).unwrap().get(v).unwrap().data(), &[6.0]);
        let err = grad_check(f, &[x], 1e-4, DEFAULT_SAMPLES, 0).unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn rejects_bad_step() {
        let x = Tensor::vector(vec![1.0]).unwrap();
        let f = |tape: &mut Tape, p: &[Var]| tape.reduce_sum(p[0], 0);
        assert!(grad_check(f, &[x.clone()], 0.0, 4, 0).is_err());
        assert!(grad_check(f, &[x], 0.5, 4, 0).is_err());
    }

    #[test]
    fn detects_nondeterminism() {
        use std::cell::Cell;
        let calls = Cell::new(0.0);
        let x = Tensor::vector(vec![1.0]).unwrap();
        let f = |tape: &mut Tape, p: &[Var]| {
            calls.set(calls.get() + 1.0);
            let y = tape.scale(p[0], calls.get())?;
            tape.reduce_sum(y, 0)
        };
        assert!(matches!(
            grad_check(f, &[x], 1e-5, 4, 0),
            Err(Error::NonDeterministic { .. })
        ));
    }
}
