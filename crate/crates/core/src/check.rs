//! Property battery over the whole library: symmetry of set models,
//! the permutation commutant, gradients, power-sum inversion and the
//! Bayesian Sets oracle.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::autodiff::{PrimitiveKind, Tape, Var};
use crate::bayes::{score_item, score_set, BetaBinomialModel, BinaryItem};
use crate::error::Result;
use crate::gradcheck::{grad_check, probe, tolerance, DEFAULT_SAMPLES};
use crate::layers::{
    build_theta, commutant_dimension, commutes_with_all_permutations, Activation, Architecture,
    ConditionMode, EquivariantSpec, EquivariantStack, EquivariantVariant, InvariantSpec, LayerSpec,
    Pool, SetBatch, SetModel,
};
use crate::powersum::{countable_encode, embed, invert, SortedSample};
use crate::tasks::{
    gen_digit_sum, gen_outlier_sets, gen_population_task, GaussianKind, GaussianTaskSpec,
};
use crate::tensor::Tensor;
use crate::train::{default_architecture, record_loss, TaskKind};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantity against its bound.
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &'static str, run: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

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

fn random_set(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Result<Tensor> {
    Tensor::new(
        vec![m, d],
        (0..m * d).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
}

fn random_layers(rng: &mut ChaCha8Rng) -> Vec<LayerSpec> {
    let depth = rng.random_range(1..=3);
    (0..depth)
        .map(|_| {
            LayerSpec::new(
                rng.random_range(1..=16),
                ACTIVATIONS[rng.random_range(0..5)],
            )
        })
        .collect()
}

fn shuffled(rng: &mut ChaCha8Rng, m: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(rng);
    perm
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Random invariant models on random sets of size `1..=50`: the worst
/// relative change in output when the elements are permuted.
pub fn invariance(seed: u64, trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let d = rng.random_range(1..=16);
        let spec = InvariantSpec {
            input_width: d,
            phi: random_layers(&mut rng),
            pool: [Pool::Sum, Pool::Max, Pool::Mean][rng.random_range(0..3)],
            rho: random_layers(&mut rng),
            condition: ConditionMode::None,
        };
        let model = SetModel::init(&Architecture::Invariant(spec), &mut rng)?;
        let m = rng.random_range(1..=50);
        let set = random_set(&mut rng, m, d)?;
        let perm = shuffled(&mut rng, m);
        let a = model.forward(&SetBatch::from_sets(&[&set])?)?;
        let b = model.forward(&SetBatch::from_sets(&[&set.select_rows(&perm)])?)?;
        for (x, y) in a.data().iter().zip(b.data()) {
            worst = worst.max(rel_err(*x, *y));
        }
    }
    Ok(worst)
}

/// Random equivariant stacks of depth `1..=4`: the worst relative gap
/// between `f(P x)` and `P f(x)`.
pub fn equivariance(seed: u64, trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let d = rng.random_range(1..=16);
        let depth = rng.random_range(1..=4);
        let mut width = d;
        let mut specs = Vec::with_capacity(depth);
        for _ in 0..depth {
            let variant = VARIANTS[rng.random_range(0..4)];
            let out = match variant {
                EquivariantVariant::ScalarLambdaGamma => width,
                _ => rng.random_range(1..=16),
            };
            specs.push(EquivariantSpec {
                width: out,
                variant,
                activation: ACTIVATIONS[rng.random_range(0..5)],
            });
            width = out;
        }
        let stack = EquivariantStack::init(d, &specs, &mut rng)?;
        let m = rng.random_range(1..=50);
        let set = random_set(&mut rng, m, d)?;
        let perm = shuffled(&mut rng, m);
        let out = stack.forward(&SetBatch::from_sets(&[&set])?)?;
        let moved = stack.forward(&SetBatch::from_sets(&[&set.select_rows(&perm)])?)?;
        for (x, y) in moved.data().iter().zip(out.select_rows(&perm).data()) {
            worst = worst.max(rel_err(*x, *y));
        }
    }
    Ok(worst)
}

/// Commutant dimension for `M = 2..=6`, plus both directions of the tied
/// form: `lambda I + gamma 1 1^T` commutes, a perturbed copy does not.
pub fn commutant(seed: u64) -> Result<(Vec<usize>, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = (2..=6)
        .map(commutant_dimension)
        .collect::<Result<Vec<_>>>()?;
    let mut both = true;
    for m in 2..=6 {
        let theta = build_theta(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), m)?;
        both &= commutes_with_all_permutations(&theta)?;
        let mut broken = theta.clone();
        let (i, j) = (rng.random_range(0..m), rng.random_range(0..m));
        broken.data_mut()[i * m + j] += 0.5;
        both &= !commutes_with_all_permutations(&broken)?;
    }
    Ok((dims, both))
}

/// Grad-check error of each primitive on its probe graph.
pub fn primitive_gradients(seed: u64) -> Result<Vec<(PrimitiveKind, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PrimitiveKind::ALL
        .into_iter()
        .map(|kind| {
            let p = probe(kind, &mut rng);
            Ok((
                kind,
                grad_check(&p.loss, &p.params, 1e-5, DEFAULT_SAMPLES, seed)?,
            ))
        })
        .collect()
}

/// Grad-check error of the default architecture of each task under its
/// training loss.
pub fn architecture_gradients(seed: u64) -> Result<Vec<(TaskKind, f64)>> {
    let spec = GaussianTaskSpec {
        set_size_range: (4, 7),
        ..GaussianTaskSpec::new(GaussianKind::Rotation, 3, seed)
    };
    let cases = [
        (TaskKind::Population, gen_population_task(&spec)?),
        (TaskKind::DigitSum, gen_digit_sum(3, 6, None, seed)?),
        (TaskKind::Outlier, gen_outlier_sets(3, 5, 4, 3.0, seed)?),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cases
        .into_iter()
        .map(|(task, data)| {
            let width = data.width().unwrap_or(1);
            let model = SetModel::init(&default_architecture(task, width), &mut rng)?;
            let batch = data.batch(&[0, 1, 2])?;
            let params: Vec<Tensor> = model.parameters().into_iter().cloned().collect();
            let f =
                |t: &mut Tape, p: &[Var]| record_loss(&model, task, t, p, &batch, data.targets());
            Ok((task, grad_check(f, &params, 1e-6, DEFAULT_SAMPLES, seed)?))
        })
        .collect()
}

/// Sorted values in `[0, 1]` with consecutive gaps of at least `gap`.
pub fn separated_sample(rng: &mut ChaCha8Rng, m: usize, gap: f64) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        v.sort_by(f64::total_cmp);
        if v.windows(2).all(|w| w[1] - w[0] >= gap) {
            return v;
        }
    }
}

/// Worst elementwise error of `invert(embed(x))` over `trials` samples
/// with `M` cycling through `2..=8` and gaps of at least `1e-3`.
pub fn powersum_roundtrip(seed: u64, trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..trials {
        let x = separated_sample(&mut rng, 2 + i % 7, 1e-3);
        let back = invert(&embed(&SortedSample::new(x.clone())?))?;
        for (a, b) in back.values().iter().zip(&x) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Whether the countable encoding separates every subset of a
/// `universe`-element set under the code `1..=universe`.
pub fn encoding_injective(universe: usize) -> Result<bool> {
    let code: Vec<u32> = (1..=universe as u32).collect();
    let mut seen = HashSet::new();
    for mask in 0u64..(1 << universe) {
        let set = (0..universe).filter(|b| mask & (1 << b) != 0);
        if !seen.insert(countable_encode(set, &code)?.to_bits()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `log p(X)` coordinate by coordinate from Gamma functions.
pub fn log_marginal(model: &BetaBinomialModel, set: &[BinaryItem]) -> f64 {
    let m = set.len() as f64;
    (0..model.dim())
        .map(|j| {
            let (bp, bm) = (model.beta_plus()[j], model.beta_minus()[j]);
            let ones = set.iter().filter(|x| x.bits()[j]).count() as f64;
            ln_gamma(bp + bm) - ln_gamma(bp + bm + m) + ln_gamma(bp + ones) - ln_gamma(bp)
                + ln_gamma(bm + m - ones)
                - ln_gamma(bm)
        })
        .sum()
}

fn random_triple(rng: &mut ChaCha8Rng) -> Result<(BetaBinomialModel, Vec<BinaryItem>, BinaryItem)> {
    let d = rng.random_range(1..=12);
    let prior = |rng: &mut ChaCha8Rng| (0..d).map(|_| rng.random_range(0.05..5.0)).collect();
    let model = BetaBinomialModel::new(prior(rng), prior(rng))?;
    let density: f64 = rng.random();
    let item = |rng: &mut ChaCha8Rng| {
        BinaryItem::new((0..d).map(|_| rng.random::<f64>() < density).collect())
    };
    let n = rng.random_range(0..=40);
    let set = (0..n).map(|_| item(rng)).collect();
    Ok((model, set, item(rng)))
}

/// Over `trials` random (prior, set, item) triples: the worst gap between
/// the count-form item score and the marginal-likelihood ratio, and
/// between the set score and its telescoped item scores.
pub fn bayes_oracle(seed: u64, trials: usize) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut item_gap, mut set_gap) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let (model, mut set, x) = random_triple(&mut rng)?;
        let fast = score_item(&model, &set, &x)?;
        let mut joined = set.clone();
        joined.push(x.clone());
        let oracle = log_marginal(&model, &joined)
            - log_marginal(&model, &set)
            - log_marginal(&model, std::slice::from_ref(&x));
        item_gap = item_gap.max((fast - oracle).abs());
        set.push(x);
        let whole = score_set(&model, &set)?;
        let telescoped = (0..set.len())
            .map(|m| score_item(&model, &set[..m], &set[m]))
            .sum::<Result<f64>>()?;
        set_gap = set_gap.max((whole - telescoped).abs());
    }
    Ok((item_gap, set_gap))
}

/// Every check at its acceptance size and tolerance.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        timed("invariance", || {
            let worst = invariance(seed, 100)?;
            Ok((
                worst <= 1e-6,
                format!("100 models, max rel err {worst:.2e} <= 1e-6"),
            ))
        }),
        timed("equivariance", || {
            let worst = equivariance(seed, 100)?;
            Ok((
                worst <= 1e-9,
                format!("100 stacks, max rel err {worst:.2e} <= 1e-9"),
            ))
        }),
        timed("commutant", || {
            let (dims, both) = commutant(seed)?;
            let ok = dims.iter().all(|&d| d == 2) && both;
            Ok((
                ok,
                format!("dims M=2..6 {dims:?}, tied form commutes and perturbed fails: {both}"),
            ))
        }),
        timed("gradients", || {
            let prims = primitive_gradients(seed)?;
            let archs = architecture_gradients(seed)?;
            let bad: Vec<String> = prims
                .iter()
                .filter(|(k, e)| *e > tolerance(*k))
                .map(|(k, e)| format!("{k} {e:.1e}"))
                .chain(
                    archs
                        .iter()
                        .filter(|(_, e)| *e > 1e-4)
                        .map(|(t, e)| format!("{} {e:.1e}", t.name())),
                )
                .collect();
            let worst = archs.iter().map(|a| a.1).fold(0.0, f64::max);
            let detail = if bad.is_empty() {
                format!(
                    "{} primitives, 3 architectures (max {worst:.1e} <= 1e-4)",
                    prims.len()
                )
            } else {
                format!("failed: {}", bad.join(", "))
            };
            Ok((bad.is_empty(), detail))
        }),
        timed("powersum-roundtrip", || {
            let worst = powersum_roundtrip(seed, 200)?;
            let injective = encoding_injective(12)?;
            let detail = format!("200 samples, max err {worst:.2e} <= 1e-6; 12-element encoding injective: {injective}");
            Ok((worst <= 1e-6 && injective, detail))
        }),
        timed("bayes-oracle", || {
            let (item, set) = bayes_oracle(seed, 1000)?;
            Ok((
                item <= 1e-9 && set <= 1e-9,
                format!("1000 triples, item gap {item:.1e}, set gap {set:.1e} <= 1e-9"),
            ))
        }),
    ]
}

/// Fixed-width table, one row per check, then a totals line.
pub fn summary_table(results: &[CheckResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:<6} {:>8}  detail",
        "check", "status", "seconds"
    );
    for r in results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(
            out,
            "{:<20} {:<6} {:>8.2}  {}",
            r.name, status, r.seconds, r.detail
        );
    }
    let passed = results.iter().filter(|r| r.passed).count();
    let _ = writeln!(out, "{passed}/{} checks passed", results.len());
    out
}
