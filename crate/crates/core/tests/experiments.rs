//! End-to-end experiment drivers on synthetic data.

mod common;

use autoseqrec::eval::{
    self, evaluate_trained, grid_search, run_ablation, run_ablations, run_future_interaction, AblationVariant,
    GridSpec, Stage,
};
use autoseqrec::ingest::chronological_split;
use autoseqrec::persist;
use autoseqrec::scoring::{transition_embedding, Normalization, TransitionEmbedding};
use autoseqrec::{
    Activation, InferenceConfig, MatrixState, ModelParams, ReplayOptions, Session, SplitLog, TrainConfig,
    TransitionTransform,
};

fn split() -> SplitLog {
    chronological_split(&common::markov_log(21, 40, 30, 1500), 0.8, 0.1).unwrap()
}

fn small_train() -> TrainConfig {
    TrainConfig { hidden: 8, epochs: 8, batch_size: 16, ..TrainConfig::default() }
}

#[test]
fn degenerate_model_scores_by_tie_rule() {
    let split = split();
    let params = ModelParams::zeros(split.num_items(), 4, Activation::Identity, TransitionTransform::Log1p);
    let infer = InferenceConfig { normalization: Normalization::None, ..InferenceConfig::with_lambdas(1.0, 0.0) };
    let (report, records) = evaluate_trained(&split, &params, &infer, &ReplayOptions::default()).unwrap();
    // All scores tie, so the target's rank is its index + 1.
    let expected: f64 =
        split.test.events.iter().map(|e| 1.0 / (e.item as f64 + 1.0)).sum::<f64>() / split.test.len() as f64;
    assert!((report.mrr - expected).abs() < 1e-12);
    assert!(records.iter().zip(&split.test.events).all(|(r, e)| r.rank == e.item as usize + 1));
    assert_eq!(report.events, split.test.len());
}

#[test]
fn ablation_all_equals_future_interaction_run() {
    let split = split();
    let infer = InferenceConfig::with_lambdas(0.2, 0.4);
    let opts = ReplayOptions::default();
    let run = run_future_interaction(&split, &small_train(), &infer, &opts, &mut |_| {}).unwrap();
    let all = run_ablation(&split, &run.params, AblationVariant::All, &infer, &opts, Stage::Test).unwrap();
    assert_eq!(all.mrr, run.report.mrr);
    assert_eq!(all.recall_at_k, run.report.recall_at_k);

    // Every variant evaluated in one shared replay equals evaluating it alone.
    let together = run_ablations(&split, &run.params, &AblationVariant::ALL, &infer, &opts, Stage::Validation).unwrap();
    for (variant, report) in together {
        let alone = run_ablation(&split, &run.params, variant, &infer, &opts, Stage::Validation).unwrap();
        assert_eq!(report.mrr, alone.mrr, "{variant}");
    }
}

#[test]
fn hadamard_variants_agree_on_symmetric_rows() {
    let row = [0.2, 0.7, 0.4];
    assert_eq!(
        transition_embedding(&row, &row, TransitionEmbedding::SourceOnly),
        transition_embedding(&row, &row, TransitionEmbedding::CollabOnly)
    );
}

#[test]
fn grid_sweeps_lambda_without_retraining() {
    let split = split();
    let grid = GridSpec { hidden: vec![4, 8], ..GridSpec::default() };
    let cfg = TrainConfig { epochs: 3, ..small_train() };
    let out = grid_search(&split, &grid, &cfg, &InferenceConfig::default(), &ReplayOptions::default(), 2).unwrap();
    assert_eq!(out.cells.len(), 2 * 66);
    for run in &out.runs {
        assert_eq!(run.checksum_before_sweep, run.checksum_after_sweep);
    }
    let best_val = out.cells.iter().map(|c| c.val_mrr).fold(f64::MIN, f64::max);
    assert_eq!(out.best.val_mrr, best_val);

    // A cell's numbers equal a direct evaluation with the same λ.
    let params = autoseqrec::model::train(
        &eval::training_state(&split, true).unwrap(),
        &TrainConfig { hidden: out.best.hidden, ..cfg.clone() },
        None,
        &mut |_| {},
    )
    .unwrap()
    .params;
    let infer = InferenceConfig::with_lambdas(out.best.lambda1, out.best.lambda2);
    let (direct, _) = evaluate_trained(&split, &params, &infer, &ReplayOptions::default()).unwrap();
    assert_eq!(direct.mrr, out.best.test_mrr);

    // Parallel and sequential runs agree.
    let seq = grid_search(&split, &grid, &cfg, &InferenceConfig::default(), &ReplayOptions::default(), 1).unwrap();
    assert_eq!(seq.cells, out.cells);

    let csv = eval::heatmap_csv(&out.cells, 8, &grid, eval::HeatmapMetric::TestRecall);
    assert_eq!(csv.lines().count(), 12);
    assert_eq!(csv.lines().nth(11).unwrap().split(',').filter(|f| !f.is_empty()).count(), 2);
}

#[test]
fn snapshot_resume_equals_straight_replay() {
    let log = common::markov_log(33, 20, 25, 400);
    let history = log.slice(0..200);
    let (first, second) = (log.slice(200..300), log.slice(300..400));
    let params = ModelParams::init(25, 6, 9, Activation::Identity, TransitionTransform::Log1p).unwrap();
    let cfg = InferenceConfig::default();
    let opts = ReplayOptions::default();

    let mut straight = Session::new(&params, MatrixState::build(&history).unwrap()).unwrap();
    let all: Vec<usize> = straight.replay(&log.slice(200..400), &cfg, &opts).unwrap().iter().map(|r| r.rank).collect();

    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("state.asrq");
    let mut a = Session::new(&params, MatrixState::build(&history).unwrap()).unwrap();
    let mut ranks: Vec<usize> = a.replay(&first, &cfg, &opts).unwrap().iter().map(|r| r.rank).collect();
    persist::save_state(&a.state, "digest", &snap).unwrap();
    drop(a);
    let mut b = Session::new(&params, persist::load_state(&snap, Some("digest")).unwrap()).unwrap();
    ranks.extend(b.replay(&second, &cfg, &opts).unwrap().iter().map(|r| r.rank));
    assert_eq!(ranks, all);
    assert_eq!(b.state, straight.state);
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let split = split();
    let state = eval::training_state(&split, true).unwrap();
    let a = autoseqrec::model::train(&state, &small_train(), None, &mut |_| {}).unwrap();
    let b = autoseqrec::model::train(&state, &small_train(), None, &mut |_| {}).unwrap();
    assert_eq!(a.params.checksum(), b.params.checksum());
    let c = autoseqrec::model::train(&state, &TrainConfig { seed: 43, ..small_train() }, None, &mut |_| {}).unwrap();
    assert_ne!(a.params.checksum(), c.params.checksum());
}

#[test]
fn trained_model_beats_untrained_on_structured_data() {
    let split = split();
    let opts = ReplayOptions::default();
    let infer = InferenceConfig::default();
    let cfg = TrainConfig { hidden: 16, epochs: 30, batch_size: 16, ..TrainConfig::default() };
    let run = run_future_interaction(&split, &cfg, &infer, &opts, &mut |_| {}).unwrap();
    let untrained = ModelParams::init(split.num_items(), 16, 42, Activation::Identity, TransitionTransform::Log1p).unwrap();
    let (base, _) = evaluate_trained(&split, &untrained, &infer, &opts).unwrap();
    assert!(run.report.mrr > base.mrr, "trained {} vs untrained {}", run.report.mrr, base.mrr);
    let first = run.history.first().unwrap().losses.total;
    let last = run.history.last().unwrap().losses.total;
    assert!(last < first);
}
