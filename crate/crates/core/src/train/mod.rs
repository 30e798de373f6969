//! Training and evaluation: Adam over shuffled mini-batches of whole sets,
//! with one loss head per task.

mod adam;
mod arch;

pub use adam::{Adam, AdamConfig};
pub use arch::{default_architecture, outlier_architecture, pooled_baseline, scalar_architecture};

use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{Architecture, ConditionMode, SetBatch, SetModel};
use crate::tasks::{GaussianKind, LabeledSetDataset, Target};
use crate::tensor::Tensor;

/// Sets per forward pass during evaluation.
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Scalar statistic of a sample; metric is MSE.
    Population,
    /// Sum of one-hot digits; metric is rounded-exact accuracy.
    DigitSum,
    /// Index of the odd element out; metric is selection accuracy.
    Outlier,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Population, TaskKind::DigitSum, TaskKind::Outlier];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Population => "population",
            TaskKind::DigitSum => "digit-sum",
            TaskKind::Outlier => "outlier",
        }
    }

    pub fn default_loss(self) -> LossKind {
        match self {
            TaskKind::Population | TaskKind::DigitSum => LossKind::Mse,
            TaskKind::Outlier => LossKind::SetSoftmaxNll,
        }
    }

    /// Whether a larger metric is better.
    pub fn higher_is_better(self) -> bool {
        self != TaskKind::Population
    }

    /// Task named by a dataset record's `meta.task`; population sets carry
    /// their statistic's name.
    pub fn from_meta(name: &str) -> Result<Self> {
        name.parse().or_else(|e| {
            name.parse::<GaussianKind>()
                .map(|_| TaskKind::Population)
                .map_err(|_| e)
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown task {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Mse,
    SetSoftmaxNll,
    /// Ranking loss for set expansion; no training task uses it.
    Margin,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::SetSoftmaxNll => "set-softmax-nll",
            LossKind::Margin => "margin",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub task: TaskKind,
    pub architecture: Architecture,
    #[serde(default)]
    pub optimizer: AdamConfig,
    /// Number of sets per mini-batch.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Measure wall-clock time per epoch. Off by default so that metrics
    /// files are reproducible byte for byte.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl TrainConfig {
    pub fn new(task: TaskKind, architecture: Architecture) -> Self {
        TrainConfig {
            task,
            architecture,
            optimizer: AdamConfig::default(),
            batch_size: 64,
            epochs: 20,
            seed: 0,
            loss: task.default_loss(),
            record_wall_time: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: TrainConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks the settings that do not depend on a dataset.
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.architecture.parameter_count().is_none() {
            return Err(Error::invalid("architecture parameter count overflows"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid(
                "batch size and epoch count must be positive",
            ));
        }
        match (self.task, self.loss) {
            (TaskKind::Population | TaskKind::DigitSum, LossKind::Mse)
            | (TaskKind::Outlier, LossKind::SetSoftmaxNll) => {}
            (_, LossKind::Margin) => {
                return Err(Error::invalid(
                    "margin loss scores candidate items for set expansion and has no training head",
                ))
            }
            (task, loss) => {
                return Err(Error::invalid(format!(
                    "loss {} does not fit task {}",
                    loss.name(),
                    task.name()
                )))
            }
        }
        match (&self.architecture, self.task) {
            (Architecture::Invariant(spec), _) if spec.condition != ConditionMode::None => Err(
                Error::invalid("training does not supply per-set conditions"),
            ),
            (Architecture::Equivariant { .. }, TaskKind::Population | TaskKind::DigitSum) => {
                Err(Error::invalid(format!(
                    "task {} needs one output per set; use an invariant architecture",
                    self.task.name()
                )))
            }
            _ => Ok(()),
        }
    }

    /// Checks that the dataset fits the task and the architecture.
    pub fn check_dataset(&self, data: &LabeledSetDataset) -> Result<()> {
        let model = SetModel::init(&self.architecture, &mut ChaCha8Rng::seed_from_u64(0))?;
        check_compatible(&model, data, self.task)
    }
}

fn check_compatible(model: &SetModel, data: &LabeledSetDataset, task: TaskKind) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("dataset has no sets"));
    }
    let width = data.width().unwrap_or(0);
    if width != model.architecture().input_width() {
        return Err(Error::DimensionMismatch {
            expected: model.architecture().input_width(),
            actual: width,
        });
    }
    let wants_index = task == TaskKind::Outlier;
    if data
        .targets()
        .iter()
        .any(|t| t.index().is_some() != wants_index)
    {
        return Err(Error::invalid(format!(
            "task {} needs {} targets",
            task.name(),
            if wants_index { "index" } else { "scalar" }
        )));
    }
    let out = model.output_width();
    match model {
        SetModel::Invariant(_) if wants_index => {
            if let Some(s) = data.sets().iter().find(|s| s.rows() != out) {
                return Err(Error::invalid(format!(
                    "invariant selector emits {out} scores but a set has {} elements",
                    s.rows()
                )));
            }
        }
        _ if out != 1 => {
            return Err(Error::invalid(format!(
                "model emits {out} columns, task needs 1"
            )));
        }
        _ => {}
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Mean loss over the sets seen in the epoch.
    pub train_loss: f64,
    /// MSE, rounded-exact accuracy or selection accuracy.
    pub eval_metric: f64,
    /// Zero unless wall-clock timing was requested.
    pub wall_seconds: f64,
}

impl MetricsRecord {
    pub const CSV_HEADER: [&'static str; 4] =
        ["epoch", "train_loss", "eval_metric", "wall_seconds"];
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: SetModel,
    pub metrics: Vec<MetricsRecord>,
}

/// Trains on `data` and reports the metric on the same data each epoch.
pub fn train(config: &TrainConfig, data: &LabeledSetDataset) -> Result<TrainOutcome> {
    train_with_eval(config, data, None)
}

/// Trains on `data`; the per-epoch metric is computed on `eval` when given.
pub fn train_with_eval(
    config: &TrainConfig,
    data: &LabeledSetDataset,
    eval: Option<&LabeledSetDataset>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = SetModel::init(&config.architecture, &mut init_rng)?;
    check_compatible(&model, data, config.task)?;
    if let Some(e) = eval {
        check_compatible(&model, e, config.task)?;
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut adam = Adam::new(config.optimizer, &model.parameters())?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut metrics = Vec::with_capacity(config.epochs);
    let start = Instant::now();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = data.batch(chunk)?;
            let targets: Vec<Target> = chunk.iter().map(|&i| data.targets()[i]).collect();
            let diverged = |model: &SetModel| Error::NonFiniteLoss {
                epoch,
                batch: b,
                param_norms: model.parameters().iter().map(|p| p.norm()).collect(),
            };
            let mut tape = Tape::new();
            let params: Vec<Var> = model
                .parameters()
                .into_iter()
                .map(|p| tape.param(p.clone()))
                .collect();
            let loss = match record_loss(&model, config.task, &mut tape, &params, &batch, &targets)
            {
                Err(Error::NonFinite { .. }) => return Err(diverged(&model)),
                other => other?,
            };
            let value = tape.value(loss).item().expect("losses are scalar");
            if !value.is_finite() {
                return Err(diverged(&model));
            }
            let mut grads = tape.backward(loss)?;
            let grads: Vec<Tensor> = params
                .iter()
                .map(|&v| grads.take(v).expect("every parameter is a trainable leaf"))
                .collect();
            if grads.iter().any(|g| !g.all_finite()) {
                return Err(diverged(&model));
            }
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            adam.step(model.parameters_mut(), &grad_refs)?;
            total += value * chunk.len() as f64;
        }
        let eval_metric = evaluate(&model, eval.unwrap_or(data), config.task)?.eval_metric;
        metrics.push(MetricsRecord {
            epoch,
            train_loss: total / data.len() as f64,
            eval_metric,
            wall_seconds: if config.record_wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
    }
    Ok(TrainOutcome { model, metrics })
}

/// Scalar loss of the task head, averaged over the sets of the batch.
pub fn record_loss(
    model: &SetModel,
    task: TaskKind,
    tape: &mut Tape,
    params: &[Var],
    batch: &SetBatch,
    targets: &[Target],
) -> Result<Var> {
    let out = model.record(tape, params, batch)?;
    if task == TaskKind::Outlier {
        let idx: Vec<usize> = targets
            .iter()
            .map(|t| {
                t.index()
                    .ok_or_else(|| Error::invalid("outlier targets are indices"))
            })
            .collect::<Result<_>>()?;
        let scores = match model {
            // one row of per-position logits per set
            SetModel::Invariant(_) => tape.reshape(out, &[batch.elements().rows(), 1])?,
            SetModel::Equivariant(_) => out,
        };
        tape.set_softmax_nll(scores, batch.segments(), &idx)
    } else {
        let t: Vec<f64> = targets
            .iter()
            .map(|t| {
                t.scalar()
                    .ok_or_else(|| Error::invalid("regression targets are scalars"))
            })
            .collect::<Result<_>>()?;
        let target = tape.constant(Tensor::new(vec![t.len(), 1], t)?);
        tape.mse_loss(out, target)
    }
}

/// Per-set scores for the outlier task, one vector per set.
fn set_scores(model: &SetModel, batch: &SetBatch, out: &Tensor) -> Vec<Vec<f64>> {
    match model {
        SetModel::Invariant(_) => (0..batch.num_sets()).map(|s| out.row(s).to_vec()).collect(),
        SetModel::Equivariant(_) => batch
            .segments()
            .iter()
            .map(|r| out.data()[r].to_vec())
            .collect(),
    }
}

/// Position of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Loss and metric of `model` on every set of `data`. The record has
/// epoch 0; `train_loss` holds the task loss on `data`.
pub fn evaluate(
    model: &SetModel,
    data: &LabeledSetDataset,
    task: TaskKind,
) -> Result<MetricsRecord> {
    check_compatible(model, data, task)?;
    let (mut loss, mut metric) = (0.0, 0.0);
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let batch = data.batch(chunk)?;
        let out = model.forward(&batch)?;
        match task {
            TaskKind::Population | TaskKind::DigitSum => {
                for (k, &i) in chunk.iter().enumerate() {
                    let y = data.targets()[i].scalar().expect("checked scalar");
                    let p = out.data()[k];
                    loss += (p - y) * (p - y);
                    metric += match task {
                        TaskKind::DigitSum => f64::from(u8::from(p.round() == y)),
                        _ => (p - y) * (p - y),
                    };
                }
            }
            TaskKind::Outlier => {
                for (scores, &i) in set_scores(model, &batch, &out).iter().zip(chunk) {
                    let t = data.targets()[i].index().expect("checked index");
                    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
                    loss += lse - scores[t];
                    metric += f64::from(u8::from(argmax(scores) == t));
                }
            }
        }
    }
    let n = data.len() as f64;
    Ok(MetricsRecord {
        epoch: 0,
        train_loss: loss / n,
        eval_metric: metric / n,
        wall_seconds: 0.0,
    })
}
