//! Default architectures for the training tasks.

use super::TaskKind;
use crate::error::{Error, Result};
use crate::layers::{
    Activation, Architecture, ConditionMode, EquivariantSpec, EquivariantVariant, InvariantSpec,
    LayerSpec, Pool,
};

/// `phi = [64, 64, 64]` relu, then `pool`, then `rho = [64, 32, 1]` with a
/// linear output.
pub fn scalar_architecture(input_width: usize, pool: Pool) -> Architecture {
    let relu = |w| LayerSpec::new(w, Activation::Relu);
    Architecture::Invariant(InvariantSpec {
        input_width,
        phi: vec![relu(64), relu(64), relu(64)],
        pool,
        rho: vec![relu(64), relu(32), LayerSpec::new(1, Activation::Identity)],
        condition: ConditionMode::None,
    })
}

/// Three max-normalized equivariant layers `[64, 64, 1]`, ELU then a
/// linear score per element.
pub fn outlier_architecture(input_width: usize) -> Architecture {
    let layer = |width, activation| EquivariantSpec {
        width,
        variant: EquivariantVariant::MaxpoolNormalized,
        activation,
    };
    Architecture::Equivariant {
        input_width,
        layers: vec![
            layer(64, Activation::Elu),
            layer(64, Activation::Elu),
            layer(1, Activation::Identity),
        ],
    }
}

/// Population statistics do not depend on the sample size, so their
/// default pools by mean; digit sums count, so theirs pools by sum.
pub fn default_architecture(task: TaskKind, input_width: usize) -> Architecture {
    match task {
        TaskKind::Population => scalar_architecture(input_width, Pool::Mean),
        TaskKind::DigitSum => scalar_architecture(input_width, Pool::Sum),
        TaskKind::Outlier => outlier_architecture(input_width),
    }
}

fn baseline_with(input_width: usize, set_size: usize, h: usize) -> Architecture {
    let elu = |w| LayerSpec::new(w, Activation::Elu);
    Architecture::Invariant(InvariantSpec {
        input_width,
        phi: vec![elu(h), elu(h)],
        pool: Pool::Sum,
        rho: vec![elu(h), LayerSpec::new(set_size, Activation::Identity)],
        condition: ConditionMode::None,
    })
}

fn baseline_params(d: usize, m: usize, h: usize) -> usize {
    (d + 1) * h + 2 * (h + 1) * h + (h + 1) * m
}

/// Selector that pools the set before any per-position reasoning: dense
/// `phi = [h, h]`, sum pooling, dense `rho = [h, set_size]` giving one logit
/// per position. `h` is chosen so the parameter count is as close as
/// possible to `parameters`.
pub fn pooled_baseline(
    input_width: usize,
    set_size: usize,
    parameters: usize,
) -> Result<Architecture> {
    if input_width == 0 || set_size < 2 {
        return Err(Error::invalid(
            "baseline needs a positive width and at least two positions",
        ));
    }
    let h = (1..=4096)
        .min_by_key(|&h| baseline_params(input_width, set_size, h).abs_diff(parameters))
        .expect("non-empty range");
    Ok(baseline_with(input_width, set_size, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::SetModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn count(arch: &Architecture) -> usize {
        SetModel::init(arch, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
            .parameter_count()
    }

    #[test]
    fn baseline_count_formula() {
        for (d, m, h) in [(8, 16, 5), (3, 4, 64)] {
            assert_eq!(count(&baseline_with(d, m, h)), baseline_params(d, m, h));
        }
    }

    #[test]
    fn baseline_matches_selector_size() {
        let target = count(&outlier_architecture(8));
        let base = count(&pooled_baseline(8, 16, target).unwrap());
        assert!(base.abs_diff(target) * 50 <= target, "{base} vs {target}");
    }

    #[test]
    fn default_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = SetModel::init(&default_architecture(TaskKind::DigitSum, 10), &mut rng).unwrap();
        assert_eq!(m.output_width(), 1);
        let m = SetModel::init(&default_architecture(TaskKind::Outlier, 8), &mut rng).unwrap();
        assert_eq!(m.output_width(), 1);
        assert!(pooled_baseline(8, 1, 100).is_err());
    }
}
