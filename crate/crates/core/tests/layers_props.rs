use deepsets::layers::{
    build_theta, commutant_dimension, commutes_with_all_permutations, Activation, Architecture,
    ConditionMode, EquivariantSpec, EquivariantStack, EquivariantVariant, InvariantSpec, LayerSpec,
    Pool, SetBatch, SetModel,
};
use deepsets::Tensor;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ACTIVATIONS: [Activation; 5] = [
    Activation::Identity,
    Activation::Relu,
    Activation::Tanh,
    Activation::Sigmoid,
    Activation::Elu,
];

const VARIANTS: [EquivariantVariant; 4] = [
    EquivariantVariant::ScalarLambdaGamma,
    EquivariantVariant::FullLambdaGamma,
    EquivariantVariant::MaxpoolNormalized,
    EquivariantVariant::MaxpoolLambdaGamma,
];

fn random_set(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Tensor {
    let data = (0..m * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::new(vec![m, d], data).unwrap()
}

fn random_layers(rng: &mut ChaCha8Rng, depth: usize) -> Vec<LayerSpec> {
    (0..depth)
        .map(|_| {
            LayerSpec::new(
                rng.random_range(1..=16),
                ACTIVATIONS[rng.random_range(0..5)],
            )
        })
        .collect()
}

fn random_invariant(rng: &mut ChaCha8Rng, d: usize, condition: ConditionMode) -> SetModel {
    let phi_depth = rng.random_range(1..=3);
    let rho_depth = rng.random_range(1..=3);
    let spec = InvariantSpec {
        input_width: d,
        phi: random_layers(rng, phi_depth),
        pool: [Pool::Sum, Pool::Max, Pool::Mean][rng.random_range(0..3)],
        rho: random_layers(rng, rho_depth),
        condition,
    };
    SetModel::init(&Architecture::Invariant(spec), rng).unwrap()
}

/// Random stack and the tolerance its pooling allows: exact for max-only
/// stacks, `1e-9` once any layer sums across elements.
fn random_stack(rng: &mut ChaCha8Rng, d: usize, depth: usize) -> (EquivariantStack, f64) {
    let mut width = d;
    let mut specs = Vec::with_capacity(depth);
    let mut summed = false;
    for _ in 0..depth {
        let variant = VARIANTS[rng.random_range(0..4)];
        let out = match variant {
            EquivariantVariant::ScalarLambdaGamma => width,
            _ => rng.random_range(1..=16),
        };
        summed |= matches!(
            variant,
            EquivariantVariant::ScalarLambdaGamma | EquivariantVariant::FullLambdaGamma
        );
        specs.push(EquivariantSpec {
            width: out,
            variant,
            activation: ACTIVATIONS[rng.random_range(0..5)],
        });
        width = out;
    }
    let stack = EquivariantStack::init(d, &specs, rng).unwrap();
    (stack, if summed { 1e-9 } else { 1e-12 })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn invariant_models_ignore_element_order(
        seed in any::<u64>(), m in 1usize..=50, d in 1usize..=16,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_invariant(&mut rng, d, ConditionMode::None);
        let set = random_set(&mut rng, m, d);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        let a = model.forward(&SetBatch::from_sets(&[&set]).unwrap()).unwrap();
        let b = model.forward(&SetBatch::from_sets(&[&set.select_rows(&perm)]).unwrap()).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!(close(*x, *y, 1e-6), "{x} vs {y}");
        }
    }

    #[test]
    fn equivariant_stacks_commute_with_permutations(
        seed in any::<u64>(), m in 1usize..=50, d in 1usize..=16, depth in 1usize..=4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (stack, tol) = random_stack(&mut rng, d, depth);
        let set = random_set(&mut rng, m, d);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        let out = stack.forward(&SetBatch::from_sets(&[&set]).unwrap()).unwrap();
        let moved = stack.forward(&SetBatch::from_sets(&[&set.select_rows(&perm)]).unwrap()).unwrap();
        let expected = out.select_rows(&perm);
        for (x, y) in moved.data().iter().zip(expected.data()) {
            prop_assert!(close(*x, *y, tol), "{x} vs {y}");
        }
    }

    #[test]
    fn ragged_batches_match_sets_one_at_a_time(
        seed in any::<u64>(), sizes in prop::collection::vec(1usize..=12, 1..6), d in 1usize..=6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_invariant(&mut rng, d, ConditionMode::None);
        let sets: Vec<Tensor> = sizes.iter().map(|&m| random_set(&mut rng, m, d)).collect();
        let batch = SetBatch::from_sets(&sets).unwrap();
        let all = model.forward(&batch).unwrap();
        for (s, set) in sets.iter().enumerate() {
            let one = model.forward(&SetBatch::from_sets(&[set]).unwrap()).unwrap();
            for (x, y) in one.data().iter().zip(all.row(s)) {
                prop_assert!(close(*x, *y, 1e-12));
            }
        }
        let perms: Vec<Vec<usize>> = sizes
            .iter()
            .map(|&m| {
                let mut p: Vec<usize> = (0..m).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        let shuffled = model.forward(&batch.permute_within_sets(&perms).unwrap()).unwrap();
        for (x, y) in all.data().iter().zip(shuffled.data()) {
            prop_assert!(close(*x, *y, 1e-6));
        }
    }

    #[test]
    fn conditioned_models_ignore_element_order(
        seed in any::<u64>(), m in 1usize..=30, d in 1usize..=8, dz in 1usize..=4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_invariant(&mut rng, d, ConditionMode::ConcatAfterPool { width: dz });
        let set = random_set(&mut rng, m, d);
        let z = random_set(&mut rng, 1, dz);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        let run = |s: &Tensor| {
            let batch = SetBatch::from_sets(&[s]).unwrap().with_condition(z.clone()).unwrap();
            model.forward(&batch).unwrap()
        };
        let (a, b) = (run(&set), run(&set.select_rows(&perm)));
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!(close(*x, *y, 1e-6));
        }
    }

    #[test]
    fn tied_theta_always_commutes(lambda in -5.0f64..5.0, gamma in -5.0f64..5.0, m in 1usize..=6) {
        let theta = build_theta(lambda, gamma, m).unwrap();
        prop_assert!(commutes_with_all_permutations(&theta).unwrap());
    }

    #[test]
    fn untied_theta_fails_to_commute(seed in any::<u64>(), m in 2usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = build_theta(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), m).unwrap();
        let (i, j) = (rng.random_range(0..m), rng.random_range(0..m));
        theta.data_mut()[i * m + j] += 0.5;
        prop_assert!(!commutes_with_all_permutations(&theta).unwrap());
    }
}

#[test]
fn tied_form_spans_the_commutant() {
    for m in 2..=6 {
        assert_eq!(commutant_dimension(m).unwrap(), 2, "M = {m}");
    }
}
