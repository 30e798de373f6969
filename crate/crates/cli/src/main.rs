use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deepsets::bayes::{expand, read_candidates_jsonl, BetaBinomialModel};
use deepsets::check::{run_all, summary_table};
use deepsets::layers::SetModel;
use deepsets::tasks::{
    gen_digit_sum, gen_outlier_sets, gen_population_task, GaussianKind, GaussianTaskSpec,
    LabeledSetDataset,
};
use deepsets::train::{
    default_architecture, evaluate, train_with_eval, MetricsRecord, TaskKind, TrainConfig,
};
use deepsets::Error;

#[derive(Parser)]
#[command(
    name = "deepsets",
    version,
    about = "Set models: data generation, training, evaluation, expansion and property checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as JSONL (gzip when OUT ends in .gz).
    Gen(GenArgs),
    /// Train a model; writes the model JSON and a per-epoch metrics CSV.
    Train(TrainArgs),
    /// Evaluate a saved model and print its metrics record as JSON.
    Eval(EvalArgs),
    /// Rank candidate binary items against a query set.
    Expand(ExpandArgs),
    /// Run the property battery and print a summary table.
    Check(CheckArgs),
}

#[derive(Args)]
struct GenArgs {
    /// population, digit-sum or outlier
    #[arg(long)]
    task: TaskKind,
    /// Number of sets.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Population statistic: rotation, correlation, rank1 or random.
    #[arg(long, default_value = "rotation")]
    kind: GaussianKind,
    /// Fixed set size (digit-sum), or elements per set (outlier, default 16).
    #[arg(long)]
    size: Option<usize>,
    /// Smallest set size (population, default 300).
    #[arg(long)]
    min_size: Option<usize>,
    /// Largest set size (digit-sum default 10, population default 500).
    #[arg(long)]
    max_size: Option<usize>,
    /// Feature dimension (population default per statistic, outlier 8).
    #[arg(long)]
    dim: Option<usize>,
    /// Mean shift of the odd element (outlier).
    #[arg(long, default_value_t = 4.0)]
    shift: f64,
    /// Pin the per-set parameter of a population task.
    #[arg(long)]
    param: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training configuration JSON; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task; read from the dataset when neither this nor a config is given.
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long)]
    data: PathBuf,
    /// Dataset scored after each epoch; the training data when absent.
    #[arg(long)]
    eval_data: Option<PathBuf>,
    /// Model JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Metrics CSV path; OUT with a .csv extension when absent.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record wall-clock seconds per epoch (metrics stop being reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Task; read from the dataset when absent.
    #[arg(long)]
    task: Option<TaskKind>,
    /// Also write the record to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExpandArgs {
    /// JSONL of {"id", "bits", "query"} lines.
    #[arg(long)]
    data: PathBuf,
    /// Number of candidates to keep; all of them when absent.
    #[arg(long)]
    k: Option<usize>,
    /// CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFiniteLoss { .. } => Failure::Check(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn load_data(path: &Path) -> Result<LabeledSetDataset, Failure> {
    LabeledSetDataset::load(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn dataset_task(data: &LabeledSetDataset) -> Result<TaskKind, Failure> {
    let name = data
        .meta()
        .first()
        .map(|m| m.task.as_str())
        .ok_or_else(|| Failure::Usage("dataset has no sets".into()))?;
    TaskKind::from_meta(name).map_err(|e| Failure::Usage(format!("{e}; pass --task")))
}

fn gen(args: GenArgs) -> Outcome {
    let data = match args.task {
        TaskKind::DigitSum => {
            gen_digit_sum(args.n, args.max_size.unwrap_or(10), args.size, args.seed)?
        }
        TaskKind::Outlier => gen_outlier_sets(
            args.n,
            args.size.unwrap_or(16),
            args.dim.unwrap_or(8),
            args.shift,
            args.seed,
        )?,
        TaskKind::Population => {
            let base = GaussianTaskSpec::new(args.kind, args.n, args.seed);
            let spec = GaussianTaskSpec {
                d: args.dim.unwrap_or(base.d),
                set_size_range: (
                    args.min_size.unwrap_or(base.set_size_range.0),
                    args.max_size.unwrap_or(base.set_size_range.1),
                ),
                param: args.param,
                ..base
            };
            gen_population_task(&spec)?
        }
    };
    data.save(&args.out)?;
    Ok(())
}

fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Outcome {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Outcome {
    let data = load_data(&args.data)?;
    let mut config = match &args.config {
        Some(path) => {
            let config = std::fs::read_to_string(path)
                .map_err(Error::from)
                .and_then(|text| TrainConfig::from_json(&text))
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            if args.task.is_some_and(|t| t != config.task) {
                return Err(Failure::Usage("--task disagrees with the config".into()));
            }
            config
        }
        None => {
            let task = match args.task {
                Some(t) => t,
                None => dataset_task(&data)?,
            };
            let width = data.width().unwrap_or(0);
            TrainConfig::new(task, default_architecture(task, width))
        }
    };
    config.epochs = args.epochs.unwrap_or(config.epochs);
    config.batch_size = args.batch.unwrap_or(config.batch_size);
    config.seed = args.seed.unwrap_or(config.seed);
    config.record_wall_time |= args.timing;
    config.validate()?;
    let eval = args.eval_data.as_deref().map(load_data).transpose()?;
    let outcome = train_with_eval(&config, &data, eval.as_ref())?;
    outcome.model.save(&args.out)?;
    let metrics = args
        .metrics
        .unwrap_or_else(|| args.out.with_extension("csv"));
    write_metrics(&metrics, &outcome.metrics)
}

fn eval_cmd(args: EvalArgs) -> Outcome {
    let model = SetModel::load(&args.model)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.model.display())))?;
    let data = load_data(&args.data)?;
    let task = match args.task {
        Some(t) => t,
        None => dataset_task(&data)?,
    };
    let record = evaluate(&model, &data, task)?;
    let json = serde_json::to_string(&record).map_err(Error::from)?;
    println!("{json}");
    if let Some(path) = args.out {
        std::fs::write(path, format!("{json}\n"))?;
    }
    Ok(())
}

fn expand_cmd(args: ExpandArgs) -> Outcome {
    let (query, pool) = File::open(&args.data)
        .map_err(Error::from)
        .and_then(|f| read_candidates_jsonl(BufReader::new(f)))
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.data.display())))?;
    let dim = query
        .iter()
        .chain(&pool)
        .map(|c| c.bits.dim())
        .next()
        .unwrap_or(0);
    let model = BetaBinomialModel::uniform(dim)?;
    let set: Vec<_> = query.into_iter().map(|c| c.bits).collect();
    let items: Vec<_> = pool.iter().map(|c| c.bits.clone()).collect();
    let ranked = expand(&model, &set, &items, args.k.unwrap_or(items.len()))?;
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["rank", "id", "score"])?;
    for (rank, r) in ranked.iter().enumerate() {
        w.write_record([
            (rank + 1).to_string(),
            pool[r.index].id.clone(),
            r.score.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn check_cmd(args: CheckArgs) -> Outcome {
    let results = run_all(args.seed);
    print!("{}", summary_table(&results));
    match results.iter().filter(|r| !r.passed).count() {
        0 => Ok(()),
        n => Err(Failure::Check(format!("{n} check(s) failed"))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let outcome = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Expand(a) => expand_cmd(a),
        Command::Check(a) => check_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("deepsets: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("deepsets: {msg}");
            ExitCode::from(2)
        }
    }
}
