//! Command-line front end: prepare, train, eval, grid, recommend, bench.
//!
//! Metrics go to stdout as JSON, progress to stderr. Exit codes: 0 success,
//! 1 usage error (bad flags or invalid combinations, checked before any
//! work), 2 runtime failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use autoseqrec::eval::{
    self, AblationVariant, GridSpec, HeatmapMetric, SelectionMetric,
};
use autoseqrec::ingest::{self, FilterMode};
use autoseqrec::model::{self, EarlyStop};
use autoseqrec::persist::{self, CheckpointMeta};
use autoseqrec::scoring::{self, ComponentSet};
use autoseqrec::{
    Activation, DatasetFormat, InferenceConfig, MatrixState, Normalization, PreparedDataset, ReplayOptions,
    Session, SplitLog, TrainConfig,
};

const TRAIN_FRACTION: f64 = 0.8;
const VALIDATION_FRACTION: f64 = 0.1;
const DEFAULT_MODEL: &str = "model.asrq";

#[derive(Parser)]
#[command(name = "autoseqrec", version, about = "Incremental sequential recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a raw ratings file, filter sparse users/items and write a canonical dataset directory.
    Prepare(PrepareArgs),
    /// Train on the earliest 80% of events and write a checkpoint.
    Train(TrainArgs),
    /// Apply validation events, replay the test stream and report MRR / Recall@K.
    Eval(EvalArgs),
    /// Hidden-size x (lambda1, lambda2) grid; selects on validation, reports test.
    Grid(GridArgs),
    /// Top-K items for one user after all known events.
    Recommend(RecommendArgs),
    /// Incremental versus full-recompute latency, plus hidden-size scaling.
    Bench(BenchArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Input file layout.
    #[arg(long, value_parser = parse_format)]
    format: DatasetFormat,
    /// Raw ratings file.
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "data")]
    out: PathBuf,
    /// Drop users and items with fewer events than this.
    #[arg(long, default_value_t = 5)]
    min_count: usize,
    /// Repeat the count filter until nothing changes (k-core) instead of one pass.
    #[arg(long)]
    k_core: bool,
}

#[derive(Args, Clone)]
struct TrainFlags {
    /// Encoder hidden size.
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Rows per mini-batch.
    #[arg(long, default_value_t = 128)]
    batch: usize,
    /// Seed for initialization and batch order.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Decoder output activation.
    #[arg(long, default_value = "identity", value_parser = parse_activation)]
    decoder_activation: Activation,
    /// Validate every N epochs and keep the best weights (0 = off).
    #[arg(long, default_value_t = 0)]
    early_stop_every: usize,
    /// Validations without improvement before stopping.
    #[arg(long, default_value_t = 3)]
    patience: usize,
}

impl TrainFlags {
    fn config(&self) -> Result<TrainConfig, String> {
        let cfg = TrainConfig {
            hidden: self.hidden,
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            seed: self.seed,
            decoder_activation: self.decoder_activation,
            early_stop: (self.early_stop_every > 0).then_some(EarlyStop {
                every: self.early_stop_every,
                patience: self.patience,
            }),
            ..TrainConfig::default()
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct ScoreFlags {
    /// Weight of the collaborative score.
    #[arg(long, default_value_t = 0.3)]
    lambda1: f64,
    /// Weight of the one-hop transition score.
    #[arg(long, default_value_t = 0.3)]
    lambda2: f64,
    /// Transition hops for the third score (1 disables it).
    #[arg(long, default_value_t = 2)]
    hops: usize,
    /// Per-component score normalization.
    #[arg(long, default_value = "minmax", value_parser = parse_normalization)]
    normalize: Normalization,
    /// Comma list from collab, one_hop, two_hop.
    #[arg(long, default_value = "collab,one_hop,two_hop", value_parser = parse_components)]
    components: ComponentSet,
    /// Exclude items the user already interacted with.
    #[arg(long)]
    filter_seen: bool,
}

impl ScoreFlags {
    fn config(&self) -> Result<InferenceConfig, String> {
        let cfg = InferenceConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            hops: self.hops,
            normalization: self.normalize,
            components: self.components,
            filter_seen: self.filter_seen,
            ..InferenceConfig::default()
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared dataset directory.
    #[arg(long, default_value = "data")]
    input: PathBuf,
    /// Checkpoint path (default: <input>/model.asrq).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
    /// Scoring used for early-stopping validation.
    #[command(flatten)]
    score: ScoreFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, default_value = "data")]
    input: PathBuf,
    /// Checkpoint path (default: <input>/model.asrq).
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    score: ScoreFlags,
    /// Recall cutoff.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Write one CSV row per test event here.
    #[arg(long)]
    per_event_csv: Option<PathBuf>,
    /// Score with an ablation variant: b.c, a.c, (a*b).c, only-hidden,
    /// hidden+interaction, hidden+transition, all.
    #[arg(long, value_parser = parse_variant)]
    ablation: Option<AblationVariant>,
    /// Skip events of users with no history instead of scoring them collaboratively.
    #[arg(long)]
    skip_cold: bool,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value = "data")]
    input: PathBuf,
    /// Hidden sizes to train, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    hops: usize,
    #[arg(long, default_value = "minmax", value_parser = parse_normalization)]
    normalize: Normalization,
    #[arg(long)]
    filter_seen: bool,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Selection metric on validation: mrr or recall.
    #[arg(long, default_value = "mrr", value_parser = parse_selection)]
    select: SelectionMetric,
    /// Parallel training jobs (one per hidden size).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the lambda1 x lambda2 test Recall@K matrix of the selected hidden size here.
    #[arg(long)]
    emit_heatmap: Option<PathBuf>,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long, default_value = "data")]
    input: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    /// External user key.
    #[arg(long)]
    user: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Matrix state snapshot to serve from instead of replaying the whole log.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Write the matrix state used for this recommendation as a snapshot.
    #[arg(long)]
    save_state: Option<PathBuf>,
    #[command(flatten)]
    score: ScoreFlags,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "data")]
    input: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Test events for the incremental path (0 = all).
    #[arg(long, default_value_t = 0)]
    events: usize,
    /// Test events for the full-recompute path.
    #[arg(long, default_value_t = 20)]
    naive_events: usize,
    /// Hidden sizes for the latency scaling sweep (empty = skip).
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
    scaling: Vec<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    score: ScoreFlags,
}

fn parse_format(s: &str) -> Result<DatasetFormat, String> {
    s.parse().map_err(|e: autoseqrec::Error| e.to_string())
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    s.parse().map_err(|e: autoseqrec::Error| e.to_string())
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    s.parse().map_err(|e: autoseqrec::Error| e.to_string())
}

fn parse_components(s: &str) -> Result<ComponentSet, String> {
    s.parse().map_err(|e: autoseqrec::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<AblationVariant, String> {
    s.parse().map_err(|e: autoseqrec::Error| e.to_string())
}

fn parse_selection(s: &str) -> Result<SelectionMetric, String> {
    s.parse().map_err(|e: autoseqrec::Error| e.to_string())
}

enum Failure {
    Usage(String),
    Runtime(autoseqrec::Error),
}

impl From<autoseqrec::Error> for Failure {
    fn from(e: autoseqrec::Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = Result<(), Failure>;

fn usage<T>(r: Result<T, String>) -> Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn print_json<T: Serialize>(value: &T) -> CmdResult {
    let s = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Runtime(autoseqrec::Error::Format(e.to_string())))?;
    emit(&s)
}

/// Writes one line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(line: &str) -> CmdResult {
    match writeln!(io::stdout().lock(), "{line}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
            Err(Failure::Runtime(autoseqrec::Error::Io { path: "<stdout>".into(), source: e }))
        }
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::Runtime(autoseqrec::Error::Io { path: path.into(), source: e }))
}

fn model_path(input: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| input.join(DEFAULT_MODEL))
}

fn load_split(input: &Path) -> Result<(PreparedDataset, SplitLog), Failure> {
    let data = PreparedDataset::read_dir(input)?;
    let split = ingest::chronological_split(&data.log, TRAIN_FRACTION, VALIDATION_FRACTION)?;
    eprintln!(
        "dataset users={} items={} train={} validation={} test={}",
        split.num_users(),
        split.num_items(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    Ok((data, split))
}

fn load_model(input: &Path, explicit: &Option<PathBuf>, data: &PreparedDataset) -> Result<autoseqrec::ModelParams, Failure> {
    let path = model_path(input, explicit);
    let (params, meta) = persist::load_checkpoint(&path, Some(&data.vocab.digest()))?;
    if params.num_items() != data.vocab.num_items() || meta.num_users != data.vocab.num_users() {
        return Err(Failure::Runtime(autoseqrec::Error::Dimension(format!(
            "checkpoint is {}x{} but dataset is {}x{}",
            meta.num_users,
            params.num_items(),
            data.vocab.num_users(),
            data.vocab.num_items()
        ))));
    }
    Ok(params)
}

fn cmd_prepare(a: PrepareArgs) -> CmdResult {
    if a.min_count == 0 {
        return Err(Failure::Usage("--min-count must be >= 1".into()));
    }
    let mode = if a.k_core { FilterMode::KCore } else { FilterMode::SinglePass };
    let (data, stats) = ingest::prepare(&a.input, a.format, a.min_count, mode)?;
    data.write_dir(&a.out)?;
    eprintln!(
        "parsed={} malformed={} unique_timestamps={}",
        stats.lines_parsed, stats.malformed, stats.unique_timestamps
    );
    emit(&format!("users={} items={} events={}", stats.users, stats.items, stats.events))
}

#[derive(Serialize)]
struct TrainSummary {
    checkpoint: PathBuf,
    checksum: String,
    epochs_run: usize,
    best_epoch: usize,
    initial_loss: f64,
    final_loss: f64,
    train_ms: f64,
    config: TrainConfig,
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let cfg = usage(a.train.config())?;
    let infer = usage(a.score.config())?;
    let out = model_path(&a.input, &a.out);
    let (data, split) = load_split(&a.input)?;
    let state = eval::training_state(&split, true)?;
    let start = Instant::now();
    let mut log = |s: &model::EpochStats| eprintln!("{}", s.log_line());
    let outcome = if cfg.early_stop.is_some() {
        let opts = ReplayOptions::default();
        let mut v = |p: &autoseqrec::ModelParams| eval::validation_mrr(&split, p, &infer, &opts);
        model::train(&state, &cfg, Some(&mut v), &mut log)?
    } else {
        model::train(&state, &cfg, None, &mut log)?
    };
    let train_ms = start.elapsed().as_secs_f64() * 1e3;
    let meta = CheckpointMeta {
        num_users: split.num_users(),
        seed: cfg.seed,
        vocab_digest: data.vocab.digest(),
    };
    persist::save_checkpoint(&outcome.params, &meta, &out)?;
    print_json(&TrainSummary {
        checkpoint: out,
        checksum: outcome.params.checksum(),
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        initial_loss: outcome.initial.total,
        final_loss: outcome.history.last().map_or(outcome.initial.total, |h| h.losses.total),
        train_ms,
        config: cfg,
    })
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    report: eval::MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    ablation: Option<String>,
    latency: eval::LatencyStats,
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    if a.k == 0 {
        return Err(Failure::Usage("--k must be >= 1".into()));
    }
    let base = usage(a.score.config())?;
    let infer = a.ablation.map_or(base, |v| v.configure(&base));
    let opts = ReplayOptions { top_k: a.k, skip_cold: a.skip_cold };
    let (data, split) = load_split(&a.input)?;
    let params = load_model(&a.input, &a.model, &data)?;
    let (report, records) = eval::evaluate_trained(&split, &params, &infer, &opts)?;
    if let Some(path) = &a.per_event_csv {
        write_text(path, &eval::records_csv(&records))?;
    }
    let latency = eval::LatencyStats::from_samples(&records.iter().map(|r| r.latency_us).collect::<Vec<_>>());
    print_json(&EvalOutput {
        report,
        ablation: a.ablation.map(|v| v.tag().to_string()),
        latency,
    })
}

#[derive(Serialize)]
struct GridOutput {
    #[serde(flatten)]
    outcome: eval::GridOutcome,
    lambda_sensitivity: Option<eval::Sensitivity>,
}

fn cmd_grid(a: GridArgs) -> CmdResult {
    if a.hidden.is_empty() || a.hidden.contains(&0) {
        return Err(Failure::Usage("--hidden needs positive sizes".into()));
    }
    if a.k == 0 || a.jobs == 0 {
        return Err(Failure::Usage("--k and --jobs must be >= 1".into()));
    }
    let train_cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch,
        seed: a.seed,
        ..TrainConfig::default()
    };
    usage(train_cfg.validate().map_err(|e| e.to_string()))?;
    let base = InferenceConfig {
        hops: a.hops,
        normalization: a.normalize,
        filter_seen: a.filter_seen,
        ..InferenceConfig::default()
    };
    usage(base.validate().map_err(|e| e.to_string()))?;
    let grid = GridSpec {
        hidden: a.hidden.clone(),
        selection: a.select,
        ..GridSpec::default()
    };
    let opts = ReplayOptions { top_k: a.k, skip_cold: false };
    let (_, split) = load_split(&a.input)?;
    eprintln!("grid hidden={:?} cells={}", grid.hidden, grid.admissible_pairs().len());
    let outcome = eval::grid_search(&split, &grid, &train_cfg, &base, &opts, a.jobs)?;
    for run in &outcome.runs {
        eprintln!("hidden={} train_ms={:.0} final_loss={:.6}", run.hidden, run.train_ms, run.final_loss);
    }
    let hidden = outcome.best.hidden;
    if let Some(path) = &a.emit_heatmap {
        write_text(path, &eval::heatmap_csv(&outcome.cells, hidden, &grid, HeatmapMetric::TestRecall))?;
    }
    let lambda_sensitivity = eval::lambda_sensitivity(&outcome.cells, hidden, HeatmapMetric::TestRecall);
    print_json(&GridOutput { outcome, lambda_sensitivity })
}

fn cmd_recommend(a: RecommendArgs) -> CmdResult {
    if a.k == 0 {
        return Err(Failure::Usage("--k must be >= 1".into()));
    }
    let infer = usage(a.score.config())?;
    let data = PreparedDataset::read_dir(&a.input)?;
    let params = load_model(&a.input, &a.model, &data)?;
    let user = data
        .vocab
        .user_index(&a.user)
        .ok_or_else(|| Failure::Runtime(autoseqrec::Error::UnknownKey(a.user.clone())))?;
    let state = match &a.state {
        Some(path) => persist::load_state(path, Some(&data.vocab.digest()))?,
        None => MatrixState::build(&data.log)?,
    };
    if let Some(path) = &a.save_state {
        persist::save_state(&state, &data.vocab.digest(), path)?;
    }
    let session = Session::new(&params, state)?;
    let pred = session.predict(user, &infer)?;
    if pred.fallback {
        eprintln!("user {} has no history; collaborative scores only", a.user);
    }
    for (rank, item) in scoring::top_k(&pred.scores.values, a.k)?.into_iter().enumerate() {
        let key = data.vocab.item_key(item).unwrap_or("?");
        emit(&format!("{}\t{}\t{:.6}", rank + 1, key, pred.scores.values[item as usize]))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchOutput {
    efficiency: eval::EfficiencyReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    scaling: Option<eval::ScalingReport>,
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    if a.scaling.contains(&0) {
        return Err(Failure::Usage("--scaling sizes must be positive".into()));
    }
    let infer = usage(a.score.config())?;
    let (data, split) = load_split(&a.input)?;
    let params = load_model(&a.input, &a.model, &data)?;
    let events = if a.events == 0 { split.test.len() } else { a.events };
    let efficiency = eval::bench_efficiency(&split, &params, &infer, events, a.naive_events, None)?;
    eprintln!(
        "incremental_mean_us={:.1} naive_mean_us={:.1} speedup={:.1}",
        efficiency.incremental.mean_us, efficiency.naive.mean_us, efficiency.speedup
    );
    let scaling = if a.scaling.is_empty() {
        None
    } else {
        let history = split.train.concat(&split.validation);
        let stream = split.test.slice(0..events.min(split.test.len()));
        Some(eval::bench_hidden_scaling(&history, &stream, &a.scaling, &infer, a.seed)?)
    };
    print_json(&BenchOutput { efficiency, scaling })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Recommend(a) => cmd_recommend(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
