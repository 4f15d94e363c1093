//! Command-line front end: vocabulary training, corpus encoding,
//! granularity stats, fine-tuning, evaluation, and hyperparameter
//! sweeps. Every command writes a run manifest before touching its
//! outputs, and all randomness flows through a single `--seed` flag.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mvrseg::analysis::{granularity, Prediction};
use mvrseg::models::{
    count_corpus, train_bpe, train_unigram, BpeModel, UnigramModel, BPE_HEADER, ULM_HEADER,
};
use mvrseg::segment::{example_rng, Segmenter, SegmenterConfig};
use mvrseg::trainer::{
    accuracy, predict, train, AblateTerm, Dataset, FlattenTarget, Mode, Task, ToyModel,
    TrainConfig,
};
use mvrseg::{Error, Result};

#[derive(Parser)]
#[command(name = "mvrseg", version, about = "Subword segmentation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a vocabulary model from a corpus.
    TrainVocab(TrainVocabArgs),
    /// Segment a corpus with a trained vocabulary model.
    Encode(EncodeArgs),
    /// Report pieces-per-word granularity over a corpus.
    Stats(StatsArgs),
    /// Fine-tune the toy classifier/tagger.
    Train(TrainArgs),
    /// Evaluate a trained model and dump predictions.
    Eval(EvalArgs),
    /// Grid sweep over training hyperparameters, repeated over seeds.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Bpe,
    Ulm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EncodeMode {
    Det,
    Sample,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Clf,
    Tag,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Clf => Task::Classification,
            TaskArg::Tag => Task::Tagging,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Baseline,
    Sr,
    Mvr,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Baseline => Mode::Baseline,
            ModeArg::Sr => Mode::Sr,
            ModeArg::Mvr => Mode::Mvr,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FlattenArg {
    DetOnly,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AblateArg {
    DetCe,
    ProbCe,
    Consistency,
}

impl From<AblateArg> for AblateTerm {
    fn from(a: AblateArg) -> AblateTerm {
        match a {
            AblateArg::DetCe => AblateTerm::DetCe,
            AblateArg::ProbCe => AblateTerm::ProbCe,
            AblateArg::Consistency => AblateTerm::Consistency,
        }
    }
}

#[derive(Parser)]
struct TrainVocabArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long)]
    corpus: PathBuf,
    /// Total vocabulary size. For BPE the merge count is this minus the
    /// character inventory size.
    #[arg(long)]
    vocab_size: usize,
    #[arg(long)]
    out: PathBuf,
    /// Longest substring admitted to the unigram seed vocabulary.
    #[arg(long, default_value_t = 8)]
    seed_max_len: usize,
    /// Fraction of prunable pieces removed per unigram pruning round.
    #[arg(long, default_value_t = 0.25)]
    prune_fraction: f64,
    /// EM iterations per unigram training phase.
    #[arg(long, default_value_t = 2)]
    em_iters: usize,
}

#[derive(Parser)]
struct EncodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    mode: EncodeMode,
    /// BPE-dropout probability (sample mode, BPE models).
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    /// Sampling temperature (sample mode, unigram models).
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Parser)]
struct StatsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Optional file with one group label per corpus line.
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Parser, Clone)]
struct TrainArgs {
    #[command(flatten)]
    common: TrainCommon,
    /// Trained model bundle output path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch metrics JSONL path (default: <out>.metrics.jsonl).
    #[arg(long)]
    metrics: Option<PathBuf>,
}

/// Flags shared by `train` and `sweep`.
#[derive(Parser, Clone)]
struct TrainCommon {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Vocabulary model file (BPE merges or unigram vocab).
    #[arg(long)]
    seg_model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Optional key=value config file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// BPE-dropout probability for the sampled view.
    #[arg(long)]
    p: Option<f64>,
    /// Unigram sampling temperature for the sampled view.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    ablate: Vec<AblateArg>,
    #[arg(long, value_enum)]
    flatten_target: Option<FlattenArg>,
    #[arg(long)]
    detach_flattened: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_pieces: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Parser)]
struct EvalArgs {
    /// Trained model bundle (the segmenter travels inside it).
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_predictions: PathBuf,
    /// Optional file with one group label per example.
    #[arg(long)]
    groups: Option<PathBuf>,
}

#[derive(Parser)]
struct SweepArgs {
    /// Grid spec, e.g. "lambda=0.2,0.6;tau=1,2". Keys: lambda, tau, p,
    /// alpha.
    #[arg(long)]
    grid: String,
    /// Seeds used per grid point: seed, seed+1, ..., seed+repeats-1.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Sweep report output path (JSON).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainCommon,
}

/// Record of a command invocation, written before any other output so a
/// run can always be replayed from its manifest.
#[derive(Serialize, Deserialize)]
struct RunManifest {
    /// The exact argv of the invocation.
    command: Vec<String>,
    /// Fully resolved configuration after defaults and config files.
    config: serde_json::Value,
    seed: u64,
    /// Model files read or written by the command.
    model_paths: Vec<String>,
    /// Unix timestamp (seconds) at manifest write time.
    created_at: u64,
}

fn write_manifest(
    out: &Path,
    config: serde_json::Value,
    seed: u64,
    model_paths: &[&Path],
) -> Result<()> {
    let manifest = RunManifest {
        command: std::env::args().collect(),
        config,
        seed,
        model_paths: model_paths
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        created_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let mut path = out.as_os_str().to_owned();
    path.push(".manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(PathBuf::from(path), text)?;
    Ok(())
}

/// A trained classifier/tagger with its segmenter bundled inline, so
/// evaluation needs a single file.
#[derive(Serialize, Deserialize)]
struct ModelBundle {
    task: Task,
    label_names: Vec<String>,
    config: TrainConfig,
    /// "bpe" or "ulm".
    segmenter_family: String,
    /// The vocabulary model in its native text format.
    segmenter_data: String,
    model: ToyModel,
}

impl ModelBundle {
    fn segmenter(&self) -> Result<Segmenter> {
        load_segmenter_str(&self.segmenter_data)
    }
}

fn load_segmenter_str(text: &str) -> Result<Segmenter> {
    let first = text.lines().next().unwrap_or("");
    if first == BPE_HEADER {
        Ok(Segmenter::Bpe(BpeModel::from_file_str(text)?))
    } else if first == ULM_HEADER {
        Ok(Segmenter::Ulm(UnigramModel::from_file_str(text)?))
    } else {
        Err(Error::Parse {
            line: 1,
            msg: format!("unrecognized model header {first:?}"),
        })
    }
}

fn load_segmenter(path: &Path) -> Result<(Segmenter, String)> {
    let text = std::fs::read_to_string(path)?;
    Ok((load_segmenter_str(&text)?, text))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .map(str::to_string)
        .collect())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainVocab(args) => cmd_train_vocab(&args),
        Command::Encode(args) => cmd_encode(&args),
        Command::Stats(args) => cmd_stats(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    }
}

fn cmd_train_vocab(args: &TrainVocabArgs) -> Result<()> {
    let corpus = read_lines(&args.corpus)?;
    let stats = count_corpus(corpus.iter().filter(|l| !l.trim().is_empty()))?;
    write_manifest(
        &args.out,
        serde_json::json!({
            "family": match args.family { Family::Bpe => "bpe", Family::Ulm => "ulm" },
            "corpus": args.corpus.display().to_string(),
            "vocab_size": args.vocab_size,
            "seed_max_len": args.seed_max_len,
            "prune_fraction": args.prune_fraction,
            "em_iters": args.em_iters,
        }),
        0,
        &[&args.out],
    )?;
    match args.family {
        Family::Bpe => {
            let inventory = stats.char_inventory_size();
            if args.vocab_size < inventory {
                return Err(Error::VocabTooSmall {
                    target: args.vocab_size,
                    inventory,
                });
            }
            let model = train_bpe(&stats, args.vocab_size - inventory);
            model.save(&args.out)?;
            println!(
                "trained bpe model: {} merges, vocab {}",
                model.merges().len(),
                model.vocab().len()
            );
        }
        Family::Ulm => {
            let model = train_unigram(
                &stats,
                args.vocab_size,
                args.seed_max_len,
                args.prune_fraction,
                args.em_iters,
            )?;
            model.save(&args.out)?;
            println!("trained unigram model: {} pieces", model.pieces().len());
        }
    }
    Ok(())
}

fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let (segmenter, _) = load_segmenter(&args.model)?;
    let lines = read_lines(&args.input)?;
    write_manifest(
        &args.out,
        serde_json::json!({
            "model": args.model.display().to_string(),
            "mode": match args.mode { EncodeMode::Det => "det", EncodeMode::Sample => "sample" },
            "p": args.p,
            "alpha": args.alpha,
            "seed": args.seed,
            "in": args.input.display().to_string(),
        }),
        args.seed,
        &[&args.model],
    )?;
    let config = SegmenterConfig {
        dropout_p: args.p,
        alpha: args.alpha,
        rng_seed: args.seed,
    };
    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        let tokens = match args.mode {
            EncodeMode::Det => segmenter.encode_det(line),
            EncodeMode::Sample => {
                let mut rng = example_rng(args.seed, i as u64);
                segmenter.encode_sampled(line, &config, &mut rng)
            }
        };
        out.push_str(&tokens.pieces.join(" "));
        out.push('\n');
    }
    std::fs::write(&args.out, out)?;
    Ok(())
}

fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let (segmenter, _) = load_segmenter(&args.model)?;
    let lines = read_lines(&args.corpus)?;
    let groups = match &args.groups {
        Some(path) => {
            let g = read_lines(path)?;
            if g.len() != lines.len() {
                return Err(Error::MisalignedPredictions {
                    index: g.len().min(lines.len()),
                    left: format!("{} corpus lines", lines.len()),
                    right: format!("{} group lines", g.len()),
                });
            }
            g
        }
        None => vec!["all".to_string(); lines.len()],
    };
    write_manifest(
        &args.out,
        serde_json::json!({
            "model": args.model.display().to_string(),
            "corpus": args.corpus.display().to_string(),
            "groups": args.groups.as_ref().map(|p| p.display().to_string()),
        }),
        0,
        &[&args.model],
    )?;
    let report = granularity(
        lines
            .iter()
            .zip(&groups)
            .filter(|(line, _)| !line.trim().is_empty())
            .map(|(line, group)| (group.as_str(), segmenter.encode_det(line))),
    )?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&args.out, &text)?;
    println!("{text}");
    Ok(())
}

/// Resolve a full training configuration from family-specific defaults,
/// then the optional config file, then explicit flags.
fn resolve_train_config(args: &TrainCommon, family: Family) -> Result<TrainConfig> {
    let mut config = match (args.mode.into(), family) {
        (Mode::Baseline, _) => TrainConfig::default(),
        (Mode::Sr, _) => TrainConfig::sr_defaults(),
        (Mode::Mvr, Family::Bpe) => TrainConfig::mvr_bpe_defaults(),
        (Mode::Mvr, Family::Ulm) => TrainConfig::mvr_ulm_defaults(),
    };
    if let Some(path) = &args.config {
        apply_config_file(&mut config, &std::fs::read_to_string(path)?)?;
    }
    macro_rules! set {
        ($field:expr, $flag:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(config.lambda, args.lambda);
    set!(config.tau, args.tau);
    set!(config.segmenter.dropout_p, args.p);
    set!(config.segmenter.alpha, args.alpha);
    set!(config.seed, args.seed);
    set!(config.epochs, args.epochs);
    set!(config.learning_rate, args.learning_rate);
    set!(config.momentum, args.momentum);
    set!(config.batch_size, args.batch_size);
    set!(config.max_pieces, args.max_pieces);
    set!(config.dim, args.dim);
    set!(config.detach_flattened, args.detach_flattened);
    if let Some(ft) = args.flatten_target {
        config.flatten_target = match ft {
            FlattenArg::DetOnly => FlattenTarget::DetOnly,
            FlattenArg::Both => FlattenTarget::Both,
        };
    }
    if !args.ablate.is_empty() {
        config.ablate = args.ablate.iter().map(|&a| a.into()).collect();
    }
    config.segmenter.rng_seed = config.seed;
    config.validate()?;
    Ok(config)
}

/// Apply `key=value` lines (blank lines and `#` comments allowed) to a
/// training configuration.
fn apply_config_file(config: &mut TrainConfig, text: &str) -> Result<()> {
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: idx + 1,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        apply_config_key(config, key, value).map_err(|msg| Error::Parse {
            line: idx + 1,
            msg,
        })?;
    }
    Ok(())
}

fn apply_config_key(
    config: &mut TrainConfig,
    key: &str,
    value: &str,
) -> std::result::Result<(), String> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
        value
            .parse()
            .map_err(|_| format!("bad value {value:?} for {key}"))
    }
    match key {
        "lambda" => config.lambda = num(key, value)?,
        "tau" => config.tau = num(key, value)?,
        "p" => config.segmenter.dropout_p = num(key, value)?,
        "alpha" => config.segmenter.alpha = num(key, value)?,
        "seed" => config.seed = num(key, value)?,
        "epochs" => config.epochs = num(key, value)?,
        "learning_rate" => config.learning_rate = num(key, value)?,
        "momentum" => config.momentum = num(key, value)?,
        "batch_size" => config.batch_size = num(key, value)?,
        "max_pieces" => config.max_pieces = num(key, value)?,
        "dim" => config.dim = num(key, value)?,
        "detach_flattened" => config.detach_flattened = num(key, value)?,
        "flatten_target" => {
            config.flatten_target = match value {
                "det_only" => FlattenTarget::DetOnly,
                "both" => FlattenTarget::Both,
                _ => return Err(format!("bad value {value:?} for flatten_target")),
            }
        }
        _ => return Err(format!("unknown config key {key:?}")),
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let common = &args.common;
    let (segmenter, seg_text) = load_segmenter(&common.seg_model)?;
    let family = match segmenter {
        Segmenter::Bpe(_) => Family::Bpe,
        Segmenter::Ulm(_) => Family::Ulm,
    };
    let config = resolve_train_config(common, family)?;
    let task: Task = common.task.into();
    let dataset = Dataset::parse(task, &std::fs::read_to_string(&common.data)?)?;
    let dev = match &common.dev {
        Some(path) => Some(Dataset::parse_with_labels(
            task,
            &std::fs::read_to_string(path)?,
            dataset.label_names.clone(),
        )?),
        None => None,
    };
    write_manifest(
        &args.out,
        serde_json::to_value(&config).expect("config serializes"),
        config.seed,
        &[&common.seg_model, &args.out],
    )?;

    let outcome = train(&dataset, dev.as_ref(), &segmenter, &config)?;

    let metrics_path = args.metrics.clone().unwrap_or_else(|| {
        let mut p = args.out.as_os_str().to_owned();
        p.push(".metrics.jsonl");
        PathBuf::from(p)
    });
    let mut metrics_text = String::new();
    for m in &outcome.metrics {
        metrics_text.push_str(&serde_json::to_string(m).expect("metrics serialize"));
        metrics_text.push('\n');
    }
    std::fs::write(&metrics_path, metrics_text)?;

    let bundle = ModelBundle {
        task,
        label_names: dataset.label_names.clone(),
        config: config.clone(),
        segmenter_family: match family {
            Family::Bpe => "bpe".to_string(),
            Family::Ulm => "ulm".to_string(),
        },
        segmenter_data: seg_text,
        model: outcome.model,
    };
    std::fs::write(
        &args.out,
        serde_json::to_string(&bundle).expect("bundle serializes"),
    )?;

    if let Some(last) = outcome.metrics.last() {
        println!(
            "final epoch {}: loss {:.6} train_acc {:.4}{}",
            last.epoch,
            last.loss,
            last.train_acc,
            match last.dev_acc {
                Some(d) => format!(" dev_acc {d:.4}"),
                None => String::new(),
            }
        );
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let bundle: ModelBundle = serde_json::from_str(&std::fs::read_to_string(&args.model)?)
        .map_err(|e| Error::Parse {
            line: 1,
            msg: format!("bad model bundle: {e}"),
        })?;
    let segmenter = bundle.segmenter()?;
    let dataset = Dataset::parse_with_labels(
        bundle.task,
        &std::fs::read_to_string(&args.data)?,
        bundle.label_names.clone(),
    )?;
    let groups = match &args.groups {
        Some(path) => {
            let g = read_lines(path)?;
            if g.len() != dataset.examples.len() {
                return Err(Error::MisalignedPredictions {
                    index: g.len().min(dataset.examples.len()),
                    left: format!("{} examples", dataset.examples.len()),
                    right: format!("{} group lines", g.len()),
                });
            }
            g
        }
        None => vec!["all".to_string(); dataset.examples.len()],
    };
    write_manifest(
        &args.out_predictions,
        serde_json::json!({
            "model": args.model.display().to_string(),
            "data": args.data.display().to_string(),
            "groups": args.groups.as_ref().map(|p| p.display().to_string()),
        }),
        bundle.config.seed,
        &[&args.model],
    )?;

    let mut out = String::new();
    for (i, (ex, group)) in dataset.examples.iter().zip(&groups).enumerate() {
        let (_, probs) = match predict(
            &bundle.model,
            &ex.text,
            &segmenter,
            bundle.config.max_pieces,
            bundle.task,
        ) {
            Ok(p) => p,
            Err(Error::EmptyAfterTruncation) => continue,
            Err(e) => return Err(e),
        };
        for (w, p) in probs.iter().enumerate() {
            if w >= ex.labels.len() {
                break;
            }
            let pred = Prediction {
                id: match bundle.task {
                    Task::Classification => format!("{i}"),
                    Task::Tagging => format!("{i}.{w}"),
                },
                group: group.clone(),
                gold: ex.labels[w],
                probs: p.clone(),
            };
            out.push_str(&serde_json::to_string(&pred).expect("prediction serializes"));
            out.push('\n');
        }
    }
    std::fs::write(&args.out_predictions, out)?;

    let acc = accuracy(&bundle.model, &dataset, &segmenter, bundle.config.max_pieces)?;
    println!("{}", serde_json::json!({ "accuracy": acc }));
    Ok(())
}

/// One axis of the sweep grid: a config key and its candidate values.
struct GridAxis {
    key: String,
    values: Vec<f64>,
}

fn parse_grid(spec: &str) -> Result<Vec<GridAxis>> {
    let mut axes = Vec::new();
    for part in spec.split(';').filter(|p| !p.trim().is_empty()) {
        let (key, values) = part.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("grid entry {part:?} is not key=v1,v2,..."))
        })?;
        let key = key.trim().to_string();
        if !matches!(key.as_str(), "lambda" | "tau" | "p" | "alpha") {
            return Err(Error::InvalidConfig(format!(
                "grid key {key:?} is not one of lambda, tau, p, alpha"
            )));
        }
        let values = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad grid value {v:?} for {key}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(Error::InvalidConfig(format!("grid key {key} has no values")));
        }
        axes.push(GridAxis { key, values });
    }
    if axes.is_empty() {
        return Err(Error::InvalidConfig("empty sweep grid".to_string()));
    }
    Ok(axes)
}

/// Cartesian product of the grid axes, as (key, value) assignments.
fn grid_points(axes: &[GridAxis]) -> Vec<Vec<(String, f64)>> {
    let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push((axis.key.clone(), v));
                    q
                })
            })
            .collect();
    }
    points
}

#[derive(Serialize)]
struct SweepRow {
    point: BTreeMap<String, f64>,
    seeds: Vec<u64>,
    accuracies: Vec<f64>,
    mean: f64,
    std: f64,
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    if args.repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be positive".to_string()));
    }
    let axes = parse_grid(&args.grid)?;
    let points = grid_points(&axes);
    let (segmenter, _) = load_segmenter(&args.train.seg_model)?;
    let family = match segmenter {
        Segmenter::Bpe(_) => Family::Bpe,
        Segmenter::Ulm(_) => Family::Ulm,
    };
    let base_config = resolve_train_config(&args.train, family)?;
    let task: Task = args.train.task.into();
    let dataset = Dataset::parse(task, &std::fs::read_to_string(&args.train.data)?)?;
    let dev = match &args.train.dev {
        Some(path) => Some(Dataset::parse_with_labels(
            task,
            &std::fs::read_to_string(path)?,
            dataset.label_names.clone(),
        )?),
        None => None,
    };
    write_manifest(
        &args.out,
        serde_json::json!({
            "grid": args.grid,
            "repeats": args.repeats,
            "base": serde_json::to_value(&base_config).expect("config serializes"),
        }),
        base_config.seed,
        &[&args.train.seg_model],
    )?;

    // Flatten (point, seed) runs, execute across MVRSEG_THREADS workers,
    // then regroup per point.
    let mut runs: Vec<(usize, TrainConfig)> = Vec::new();
    for (pi, point) in points.iter().enumerate() {
        for r in 0..args.repeats {
            let mut config = base_config.clone();
            for (key, value) in point {
                apply_config_key(&mut config, key, &value.to_string())
                    .map_err(Error::InvalidConfig)?;
            }
            config.seed = base_config.seed + r as u64;
            config.segmenter.rng_seed = config.seed;
            config.validate()?;
            runs.push((pi, config));
        }
    }
    let threads = std::env::var("MVRSEG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(1);
    let results: Mutex<Vec<Option<Result<f64>>>> =
        Mutex::new((0..runs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for worker in 0..threads.min(runs.len()) {
            let runs = &runs;
            let results = &results;
            let dataset = &dataset;
            let dev = dev.as_ref();
            let segmenter = &segmenter;
            scope.spawn(move || {
                for (i, (_, config)) in runs.iter().enumerate() {
                    if i % threads != worker {
                        continue;
                    }
                    let outcome = train(dataset, dev, segmenter, config).map(|o| {
                        let last = o.metrics.last().expect("epochs > 0");
                        last.dev_acc.unwrap_or(last.train_acc)
                    });
                    results.lock().expect("no poisoned lock")[i] = Some(outcome);
                }
            });
        }
    });
    let results = results.into_inner().expect("no poisoned lock");

    let mut rows = Vec::with_capacity(points.len());
    for (pi, point) in points.iter().enumerate() {
        let mut seeds = Vec::new();
        let mut accs = Vec::new();
        for (i, (run_pi, config)) in runs.iter().enumerate() {
            if *run_pi != pi {
                continue;
            }
            let acc = results[i]
                .as_ref()
                .expect("every run executed")
                .as_ref()
                .map_err(|e| Error::InvalidConfig(format!("sweep run failed: {e}")))?;
            seeds.push(config.seed);
            accs.push(*acc);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64;
        rows.push(SweepRow {
            point: point.iter().cloned().collect(),
            seeds,
            accuracies: accs,
            mean,
            std: var.sqrt(),
        });
    }

    std::fs::write(
        &args.out,
        serde_json::to_string_pretty(&rows).expect("rows serialize"),
    )?;
    for row in &rows {
        let point = row
            .point
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        println!("{point}\tmean={:.4}\tstd={:.4}", row.mean, row.std);
    }
    Ok(())
}
