//! Ranking metrics and the experiment drivers built on top of replay:
//! future-interaction prediction, hyperparameter grid, ablation variants and
//! the incremental-versus-naive efficiency benchmark.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::incremental::{NaiveReplayer, ReplayOptions, ReplayRecord, Session};
use crate::ingest::{InteractionLog, SplitLog};
use crate::matrices::MatrixState;
use crate::model::{train, EpochStats, ModelParams, TrainConfig, TransitionTransform, Activation};
use crate::scoring::{ComponentSet, InferenceConfig, TransitionEmbedding};

pub fn mrr(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Empty("no ranks to average".into()));
    }
    if ranks.contains(&0) {
        return Err(Error::Config("ranks start at 1".into()));
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

pub fn recall_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Empty("no ranks to evaluate".into()));
    }
    if k == 0 {
        return Err(Error::Config("recall cutoff must be >= 1".into()));
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub events: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub total_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self { events: 0, mean_us: 0.0, p50_us: 0.0, p95_us: 0.0, total_ms: 0.0 };
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let pct = |p: f64| {
            let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
            sorted[idx]
        };
        let total: f64 = samples.iter().sum();
        Self {
            events: samples.len(),
            mean_us: total / samples.len() as f64,
            p50_us: pct(0.50),
            p95_us: pct(0.95),
            total_ms: total / 1e3,
        }
    }
}

/// JSON replay summary.
#[derive(Debug, Clone, Serialize)]
pub struct ReplaySummary {
    pub events: usize,
    pub mrr: f64,
    pub recall_at_k: f64,
    pub k: usize,
    pub fallback_count: usize,
    pub latency: LatencyStats,
}

impl ReplaySummary {
    pub fn from_records(records: &[ReplayRecord], k: usize) -> Result<Self> {
        let ranks: Vec<usize> = records.iter().map(|r| r.rank).collect();
        let lat: Vec<f64> = records.iter().map(|r| r.latency_us).collect();
        Ok(Self {
            events: records.len(),
            mrr: mrr(&ranks)?,
            recall_at_k: recall_at_k(&ranks, k)?,
            k,
            fallback_count: records.iter().filter(|r| r.fallback).count(),
            latency: LatencyStats::from_samples(&lat),
        })
    }
}

/// Per-event CSV: `event_index,user,item,rank,reciprocal_rank,hit,latency_us,fallback`.
pub fn records_csv(records: &[ReplayRecord]) -> String {
    let mut s = String::from("event_index,user,item,rank,reciprocal_rank,hit,latency_us,fallback\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{:.3},{}\n",
            r.event_index, r.user, r.item, r.rank, r.reciprocal_rank, r.hit as u8, r.latency_us, r.fallback as u8
        ));
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigSnapshot {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    pub inference: InferenceConfig,
    pub replay: ReplayOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub mrr: f64,
    pub recall_at_k: f64,
    pub k: usize,
    pub events: usize,
    pub fallback_count: usize,
    pub config: ConfigSnapshot,
}

impl MetricReport {
    fn from_ranks(ranks: &[usize], fallback_count: usize, config: ConfigSnapshot) -> Result<Self> {
        let k = config.replay.top_k;
        Ok(Self {
            mrr: mrr(ranks)?,
            recall_at_k: recall_at_k(ranks, k)?,
            k,
            events: ranks.len(),
            fallback_count,
            config,
        })
    }
}

/// Matrices built from the training split with the model's self-transition convention.
pub fn training_state(split: &SplitLog, count_self_transitions: bool) -> Result<MatrixState> {
    let mut state = if count_self_transitions {
        MatrixState::new(split.num_users(), split.num_items())
    } else {
        MatrixState::without_self_transitions(split.num_users(), split.num_items())
    };
    state.extend(&split.train)?;
    Ok(state)
}

/// Test-stream evaluation of trained weights: validation events are applied
/// (weights frozen) and the test stream is replayed.
pub fn evaluate_trained(
    split: &SplitLog,
    params: &ModelParams,
    infer: &InferenceConfig,
    opts: &ReplayOptions,
) -> Result<(MetricReport, Vec<ReplayRecord>)> {
    let mut session = Session::new(params, training_state(split, true)?)?;
    session.absorb(&split.validation)?;
    let records = session.replay(&split.test, infer, opts)?;
    let ranks: Vec<usize> = records.iter().map(|r| r.rank).collect();
    let fallbacks = records.iter().filter(|r| r.fallback).count();
    let report = MetricReport::from_ranks(
        &ranks,
        fallbacks,
        ConfigSnapshot { train: None, inference: *infer, replay: *opts },
    )?;
    Ok((report, records))
}

/// MRR of the validation stream replayed on top of the training matrices.
pub fn validation_mrr(split: &SplitLog, params: &ModelParams, infer: &InferenceConfig, opts: &ReplayOptions) -> Result<f64> {
    let mut session = Session::new(params, training_state(split, true)?)?;
    let records = session.replay(&split.validation, infer, opts)?;
    mrr(&records.iter().map(|r| r.rank).collect::<Vec<_>>())
}

#[derive(Debug, Clone)]
pub struct FutureInteractionOutcome {
    pub report: MetricReport,
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    pub records: Vec<ReplayRecord>,
    pub train_ms: f64,
}

/// Train on the first split, apply validation, replay test.
pub fn run_future_interaction(
    split: &SplitLog,
    train_cfg: &TrainConfig,
    infer: &InferenceConfig,
    opts: &ReplayOptions,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<FutureInteractionOutcome> {
    infer.validate()?;
    let state = training_state(split, true)?;
    let start = Instant::now();
    let outcome = if train_cfg.early_stop.is_some() && !split.validation.is_empty() {
        let mut v = |p: &ModelParams| validation_mrr(split, p, infer, opts);
        train(&state, train_cfg, Some(&mut v), on_epoch)?
    } else {
        train(&state, train_cfg, None, on_epoch)?
    };
    let train_ms = start.elapsed().as_secs_f64() * 1e3;
    let (mut report, records) = evaluate_trained(split, &outcome.params, infer, opts)?;
    report.config.train = Some(train_cfg.clone());
    Ok(FutureInteractionOutcome {
        report,
        params: outcome.params,
        history: outcome.history,
        records,
        train_ms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    Mrr,
    Recall,
}

impl FromStr for SelectionMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mrr" => Ok(SelectionMetric::Mrr),
            "recall" => Ok(SelectionMetric::Recall),
            other => Err(Error::Config(format!("unknown selection metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSpec {
    pub hidden: Vec<usize>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub selection: SelectionMetric,
}

/// 0.0, 0.1, ..., 1.0
pub fn tenths() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            hidden: vec![32, 64, 128, 256],
            lambda1: tenths(),
            lambda2: tenths(),
            selection: SelectionMetric::Mrr,
        }
    }
}

impl GridSpec {
    /// (λ1, λ2) pairs with λ1 + λ2 ≤ 1; the rest are skipped.
    pub fn admissible_pairs(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &l1 in &self.lambda1 {
            for &l2 in &self.lambda2 {
                if l1 >= 0.0 && l2 >= 0.0 && l1 + l2 <= 1.0 + 1e-9 {
                    out.push((l1, l2));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub hidden: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub val_mrr: f64,
    pub val_recall: f64,
    pub test_mrr: f64,
    pub test_recall: f64,
}

impl GridCell {
    fn validation_score(&self, m: SelectionMetric) -> f64 {
        match m {
            SelectionMetric::Mrr => self.val_mrr,
            SelectionMetric::Recall => self.val_recall,
        }
    }

    fn test_score(&self, m: SelectionMetric) -> f64 {
        match m {
            SelectionMetric::Mrr => self.test_mrr,
            SelectionMetric::Recall => self.test_recall,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HiddenRun {
    pub hidden: usize,
    pub train_ms: f64,
    pub checksum_before_sweep: String,
    pub checksum_after_sweep: String,
    pub final_loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridOutcome {
    pub cells: Vec<GridCell>,
    pub runs: Vec<HiddenRun>,
    /// Winner on validation; its test numbers are the headline.
    pub best: GridCell,
    /// Winner on test (for reference only).
    pub best_by_test: GridCell,
    pub selection: SelectionMetric,
    pub k: usize,
}

fn pick(cells: &[GridCell], key: impl Fn(&GridCell) -> f64) -> GridCell {
    // First maximum in enumeration order.
    let mut best = cells[0];
    for c in &cells[1..] {
        if key(c) > key(&best) {
            best = *c;
        }
    }
    best
}

/// Sweeps λ cells for one hidden size from a single trained model.
fn sweep_hidden(
    split: &SplitLog,
    hidden: usize,
    pairs: &[(f64, f64)],
    train_cfg: &TrainConfig,
    base: &InferenceConfig,
    opts: &ReplayOptions,
) -> Result<(Vec<GridCell>, HiddenRun)> {
    let cfg = TrainConfig { hidden, ..train_cfg.clone() };
    let state = training_state(split, true)?;
    let start = Instant::now();
    let trained = train(&state, &cfg, None, &mut |_| {})?;
    let train_ms = start.elapsed().as_secs_f64() * 1e3;
    let params = trained.params;
    let before = params.checksum();

    let cfgs: Vec<InferenceConfig> = pairs
        .iter()
        .map(|&(l1, l2)| InferenceConfig { lambda1: l1, lambda2: l2, ..*base })
        .collect();
    let mut session = Session::new(&params, state)?;
    let (val_ranks, _) = session.replay_many(&split.validation, &cfgs, opts)?;
    let (test_ranks, _) = session.replay_many(&split.test, &cfgs, opts)?;
    let after = params.checksum();

    let mut cells = Vec::with_capacity(pairs.len());
    for ((&(l1, l2), v), t) in pairs.iter().zip(&val_ranks).zip(&test_ranks) {
        cells.push(GridCell {
            hidden,
            lambda1: l1,
            lambda2: l2,
            val_mrr: mrr(v)?,
            val_recall: recall_at_k(v, opts.top_k)?,
            test_mrr: mrr(t)?,
            test_recall: recall_at_k(t, opts.top_k)?,
        });
    }
    let final_loss = trained.history.last().map(|h| h.losses.total).unwrap_or(trained.initial.total);
    Ok((
        cells,
        HiddenRun {
            hidden,
            train_ms,
            checksum_before_sweep: before,
            checksum_after_sweep: after,
            final_loss,
        },
    ))
}

/// One training run per hidden size (up to `jobs` in parallel); λ cells
/// reuse each trained model.
pub fn grid_search(
    split: &SplitLog,
    grid: &GridSpec,
    train_cfg: &TrainConfig,
    base: &InferenceConfig,
    opts: &ReplayOptions,
    jobs: usize,
) -> Result<GridOutcome> {
    if grid.hidden.is_empty() {
        return Err(Error::Config("grid needs at least one hidden size".into()));
    }
    let pairs = grid.admissible_pairs();
    if pairs.is_empty() {
        return Err(Error::Config("grid has no admissible (lambda1, lambda2) pair".into()));
    }
    if split.validation.is_empty() || split.test.is_empty() {
        return Err(Error::DegenerateSplit("grid search needs validation and test events".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<(Vec<GridCell>, HiddenRun)>> = pool.install(|| {
        use rayon::prelude::*;
        grid.hidden
            .par_iter()
            .map(|&h| sweep_hidden(split, h, &pairs, train_cfg, base, opts))
            .collect()
    });
    let mut cells = Vec::new();
    let mut runs = Vec::new();
    for r in results {
        let (c, run) = r?;
        cells.extend(c);
        runs.push(run);
    }
    let best = pick(&cells, |c| c.validation_score(grid.selection));
    let best_by_test = pick(&cells, |c| c.test_score(grid.selection));
    Ok(GridOutcome {
        cells,
        runs,
        best,
        best_by_test,
        selection: grid.selection,
        k: opts.top_k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatmapMetric {
    ValMrr,
    ValRecall,
    TestMrr,
    TestRecall,
}

impl HeatmapMetric {
    fn of(self, c: &GridCell) -> f64 {
        match self {
            HeatmapMetric::ValMrr => c.val_mrr,
            HeatmapMetric::ValRecall => c.val_recall,
            HeatmapMetric::TestMrr => c.test_mrr,
            HeatmapMetric::TestRecall => c.test_recall,
        }
    }
}

/// λ1 x λ2 matrix as CSV: header row of λ2 values, one row per λ1, empty
/// fields for inadmissible pairs.
pub fn heatmap_csv(cells: &[GridCell], hidden: usize, grid: &GridSpec, metric: HeatmapMetric) -> String {
    let mut s = String::from("lambda1\\lambda2");
    for l2 in &grid.lambda2 {
        s.push_str(&format!(",{l2:.1}"));
    }
    s.push('\n');
    for &l1 in &grid.lambda1 {
        s.push_str(&format!("{l1:.1}"));
        for &l2 in &grid.lambda2 {
            let cell = cells
                .iter()
                .find(|c| c.hidden == hidden && (c.lambda1 - l1).abs() < 1e-9 && (c.lambda2 - l2).abs() < 1e-9);
            match cell {
                Some(c) => s.push_str(&format!(",{:.6}", metric.of(c))),
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sensitivity {
    pub best: f64,
    pub median: f64,
    /// (best − median) / median
    pub relative_gap: f64,
}

/// Best cell versus the median cell of one hidden size's λ sweep.
pub fn lambda_sensitivity(cells: &[GridCell], hidden: usize, metric: HeatmapMetric) -> Option<Sensitivity> {
    let mut vals: Vec<f64> = cells.iter().filter(|c| c.hidden == hidden).map(|c| metric.of(c)).collect();
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(f64::total_cmp);
    let mid = vals.len() / 2;
    let median = if vals.len() % 2 == 1 { vals[mid] } else { 0.5 * (vals[mid - 1] + vals[mid]) };
    let best = *vals.last().expect("non-empty");
    let relative_gap = if median > 0.0 { (best - median) / median } else { f64::INFINITY };
    Some(Sensitivity { best, median, relative_gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum AblationVariant {
    /// E_s[i] · E_tᵀ
    SourceTarget,
    /// E_c[u] · E_tᵀ
    CollabTarget,
    /// (E_c[u] ⊙ E_s[i]) · E_tᵀ
    PersonalizedTarget,
    OnlyHidden,
    HiddenInteraction,
    HiddenTransition,
    All,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 7] = [
        AblationVariant::SourceTarget,
        AblationVariant::CollabTarget,
        AblationVariant::PersonalizedTarget,
        AblationVariant::OnlyHidden,
        AblationVariant::HiddenInteraction,
        AblationVariant::HiddenTransition,
        AblationVariant::All,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            AblationVariant::SourceTarget => "b.c",
            AblationVariant::CollabTarget => "a.c",
            AblationVariant::PersonalizedTarget => "(a*b).c",
            AblationVariant::OnlyHidden => "only-hidden",
            AblationVariant::HiddenInteraction => "hidden+interaction",
            AblationVariant::HiddenTransition => "hidden+transition",
            AblationVariant::All => "all",
        }
    }

    /// Scoring configuration realizing this variant on top of `base`'s λ.
    pub fn configure(self, base: &InferenceConfig) -> InferenceConfig {
        let two_hop_only = ComponentSet { collab: false, one_hop: false, two_hop: true };
        let (components, transition_embedding) = match self {
            AblationVariant::SourceTarget => (two_hop_only, TransitionEmbedding::SourceOnly),
            AblationVariant::CollabTarget => (two_hop_only, TransitionEmbedding::CollabOnly),
            AblationVariant::PersonalizedTarget | AblationVariant::OnlyHidden => {
                (two_hop_only, TransitionEmbedding::Personalized)
            }
            AblationVariant::HiddenInteraction => (
                ComponentSet { collab: true, one_hop: false, two_hop: true },
                TransitionEmbedding::Personalized,
            ),
            AblationVariant::HiddenTransition => (
                ComponentSet { collab: false, one_hop: true, two_hop: true },
                TransitionEmbedding::Personalized,
            ),
            AblationVariant::All => (ComponentSet::ALL, TransitionEmbedding::Personalized),
        };
        InferenceConfig {
            components,
            transition_embedding,
            hops: base.hops.max(2),
            ..*base
        }
    }
}

impl FromStr for AblationVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "b.c" | "b·c" | "bc" => Ok(AblationVariant::SourceTarget),
            "a.c" | "a·c" | "ac" => Ok(AblationVariant::CollabTarget),
            "(a*b).c" | "(a⊙b)·c" | "abc" => Ok(AblationVariant::PersonalizedTarget),
            "only-hidden" => Ok(AblationVariant::OnlyHidden),
            "hidden+interaction" => Ok(AblationVariant::HiddenInteraction),
            "hidden+transition" => Ok(AblationVariant::HiddenTransition),
            "all" => Ok(AblationVariant::All),
            other => Err(Error::Config(format!("unknown ablation variant `{other}`"))),
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Validation,
    Test,
}

/// Evaluates each variant on the chosen stream with one shared replay.
pub fn run_ablations(
    split: &SplitLog,
    params: &ModelParams,
    variants: &[AblationVariant],
    base: &InferenceConfig,
    opts: &ReplayOptions,
    stage: Stage,
) -> Result<Vec<(AblationVariant, MetricReport)>> {
    let cfgs: Vec<InferenceConfig> = variants.iter().map(|v| v.configure(base)).collect();
    let mut session = Session::new(params, training_state(split, true)?)?;
    let stream = match stage {
        Stage::Validation => &split.validation,
        Stage::Test => {
            session.absorb(&split.validation)?;
            &split.test
        }
    };
    let (ranks, fallbacks) = session.replay_many(stream, &cfgs, opts)?;
    variants
        .iter()
        .zip(cfgs)
        .zip(ranks)
        .map(|((&v, cfg), r)| {
            let report = MetricReport::from_ranks(&r, fallbacks, ConfigSnapshot { train: None, inference: cfg, replay: *opts })?;
            Ok((v, report))
        })
        .collect()
}

pub fn run_ablation(
    split: &SplitLog,
    params: &ModelParams,
    variant: AblationVariant,
    base: &InferenceConfig,
    opts: &ReplayOptions,
    stage: Stage,
) -> Result<MetricReport> {
    Ok(run_ablations(split, params, &[variant], base, opts, stage)?.remove(0).1)
}

#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyReport {
    pub num_items: usize,
    pub hidden: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_ms: Option<f64>,
    pub incremental: LatencyStats,
    pub naive: LatencyStats,
    /// naive mean / incremental mean
    pub speedup: f64,
}

/// Incremental latency over up to `max_events` test events against the naive
/// path over the first `naive_events` of them. Both start from train+validation.
pub fn bench_efficiency(
    split: &SplitLog,
    params: &ModelParams,
    infer: &InferenceConfig,
    max_events: usize,
    naive_events: usize,
    train_ms: Option<f64>,
) -> Result<EfficiencyReport> {
    let opts = ReplayOptions::default();
    let history = split.train.concat(&split.validation);
    let test = split.test.slice(0..max_events.min(split.test.len()));

    let mut session = Session::new(params, MatrixState::build(&history)?)?;
    let inc = session.replay(&test, infer, &opts)?;
    let naive_stream = test.slice(0..naive_events.min(test.len()));
    let mut naive = NaiveReplayer::new(params, history);
    let nv = naive.replay_observed(&naive_stream, infer, &opts, &mut |_, _| {})?;

    let incremental = LatencyStats::from_samples(&inc.iter().map(|r| r.latency_us).collect::<Vec<_>>());
    let naive = LatencyStats::from_samples(&nv.iter().map(|r| r.latency_us).collect::<Vec<_>>());
    let speedup = if incremental.mean_us > 0.0 { naive.mean_us / incremental.mean_us } else { f64::INFINITY };
    Ok(EfficiencyReport {
        num_items: split.num_items(),
        hidden: params.hidden(),
        train_ms,
        incremental,
        naive,
        speedup,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares y = a·x + b.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (slope * x + intercept)).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(LinearFit { slope, intercept, r_squared })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub hidden: Vec<usize>,
    pub mean_us: Vec<f64>,
    pub fit: Option<LinearFit>,
}

/// Mean incremental per-event latency for each hidden size, using freshly
/// initialized weights (latency does not depend on weight values).
pub fn bench_hidden_scaling(
    history: &InteractionLog,
    stream: &InteractionLog,
    hidden: &[usize],
    infer: &InferenceConfig,
    seed: u64,
) -> Result<ScalingReport> {
    let mut means = Vec::with_capacity(hidden.len());
    let base = MatrixState::build(history)?;
    for &k in hidden {
        let params = ModelParams::init(history.num_items, k, seed, Activation::Identity, TransitionTransform::Log1p)?;
        let mut session = Session::new(&params, base.clone())?;
        // warm-up pass on a clone so allocation effects do not bias the first size
        let mut warm = session.clone();
        warm.replay(&stream.slice(0..stream.len().min(20)), infer, &ReplayOptions::default())?;
        let recs = session.replay(stream, infer, &ReplayOptions::default())?;
        let lat: Vec<f64> = recs.iter().map(|r| r.latency_us).collect();
        means.push(LatencyStats::from_samples(&lat).mean_us);
    }
    let xs: Vec<f64> = hidden.iter().map(|&k| k as f64).collect();
    let fit = linear_fit(&xs, &means);
    Ok(ScalingReport { hidden: hidden.to_vec(), mean_us: means, fit })
}
