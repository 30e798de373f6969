use deepsets::tasks::{
    gen_digit_sum, gen_outlier_sets, gen_population_task, GaussianKind, GaussianTaskSpec,
    LabeledSetDataset,
};
use deepsets::train::{default_architecture, evaluate, train, TaskKind, TrainConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shuffled(data: &LabeledSetDataset, seed: u64) -> LabeledSetDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<usize>> = data
        .sets()
        .iter()
        .map(|s| {
            let mut p: Vec<usize> = (0..s.rows()).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    data.permute_elements(&perms).unwrap()
}

#[test]
fn digit_sum_loss_falls_below_a_tenth() {
    let data = gen_digit_sum(1000, 10, None, 11).unwrap();
    let mut cfg = TrainConfig::new(
        TaskKind::DigitSum,
        default_architecture(TaskKind::DigitSum, 10),
    );
    cfg.epochs = 50;
    cfg.seed = 3;
    let out = train(&cfg, &data).unwrap();
    let first = out.metrics[0].train_loss;
    let last = out.metrics.last().unwrap().train_loss;
    assert!(last < 0.1 * first, "epoch 1 {first}, epoch 50 {last}");
}

#[test]
fn no_shift_means_chance_selection() {
    let train_set = gen_outlier_sets(1000, 16, 8, 0.0, 5).unwrap();
    let test_set = gen_outlier_sets(3000, 16, 8, 0.0, 6).unwrap();
    let mut cfg = TrainConfig::new(
        TaskKind::Outlier,
        default_architecture(TaskKind::Outlier, 8),
    );
    cfg.epochs = 5;
    let out = train(&cfg, &train_set).unwrap();
    let acc = evaluate(&out.model, &test_set, TaskKind::Outlier)
        .unwrap()
        .eval_metric;
    assert!((acc - 1.0 / 16.0).abs() <= 0.05, "accuracy {acc}");
}

#[test]
fn evaluation_ignores_element_order() {
    let digits = gen_digit_sum(300, 10, None, 1).unwrap();
    let outliers = gen_outlier_sets(300, 16, 8, 4.0, 2).unwrap();
    let spec = GaussianTaskSpec {
        set_size_range: (20, 40),
        ..GaussianTaskSpec::new(GaussianKind::Rotation, 100, 3)
    };
    let population = gen_population_task(&spec).unwrap();
    for (task, data, width) in [
        (TaskKind::DigitSum, digits, 10),
        (TaskKind::Outlier, outliers, 8),
        (TaskKind::Population, population, 2),
    ] {
        let mut cfg = TrainConfig::new(task, default_architecture(task, width));
        cfg.epochs = 2;
        let model = train(&cfg, &data).unwrap().model;
        let a = evaluate(&model, &data, task).unwrap();
        let b = evaluate(&model, &shuffled(&data, 9), task).unwrap();
        match task {
            TaskKind::Outlier => assert_eq!(a.eval_metric, b.eval_metric),
            _ => assert!(
                (a.eval_metric - b.eval_metric).abs() <= 1e-6,
                "{a:?} vs {b:?}"
            ),
        }
        assert!((a.train_loss - b.train_loss).abs() <= 1e-6);
    }
}
