//! Shared fixtures: seeded synthetic interaction logs with sequential structure.

#![allow(dead_code)]

use autoseqrec::{Event, InteractionLog};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Each item has a few preferred successors; users walk that graph with some
/// restarts toward popular items. Users take turns at random, so the merged
/// stream interleaves their sequences.
pub fn markov_log(seed: u64, num_users: usize, num_items: usize, num_events: usize) -> InteractionLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let successors: Vec<Vec<u32>> = (0..num_items)
        .map(|_| (0..3).map(|_| rng.gen_range(0..num_items as u32)).collect())
        .collect();
    let popularity = WeightedIndex::new((0..num_items).map(|i| 1.0 / (1.0 + i as f64))).unwrap();
    let mut last: Vec<Option<u32>> = vec![None; num_users];
    let mut events = Vec::with_capacity(num_events);
    for t in 0..num_events {
        let user = rng.gen_range(0..num_users);
        let item = match last[user] {
            Some(prev) if rng.gen_bool(0.8) => successors[prev as usize][rng.gen_range(0..3)],
            _ => popularity.sample(&mut rng) as u32,
        };
        last[user] = Some(item);
        events.push(Event { user: user as u32, item, timestamp: t as i64, order: t as u64 });
    }
    InteractionLog::new(events, num_users, num_items).unwrap()
}

/// Uniformly random (user, item) pairs.
pub fn uniform_log(seed: u64, num_users: usize, num_items: usize, num_events: usize) -> InteractionLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = (0..num_events)
        .map(|t| Event {
            user: rng.gen_range(0..num_users as u32),
            item: rng.gen_range(0..num_items as u32),
            timestamp: t as i64,
            order: t as u64,
        })
        .collect();
    InteractionLog::new(events, num_users, num_items).unwrap()
}

pub fn pairs(log: &InteractionLog) -> Vec<(u32, u32)> {
    log.events.iter().map(|e| (e.user, e.item)).collect()
}

use autoseqrec::{InferenceConfig, MatrixState, ModelParams, NaiveReplayer, Session};

/// Worst absolute score gap and number of rank disagreements between the
/// incremental session and a full rebuild before every event.
pub struct PathComparison {
    pub events: usize,
    pub max_abs_diff: f64,
    pub rank_mismatches: usize,
}

pub fn compare_paths(
    params: &ModelParams,
    history: &InteractionLog,
    stream: &InteractionLog,
    cfg: &InferenceConfig,
) -> PathComparison {
    let mut session = Session::new(params, MatrixState::build(history).unwrap()).unwrap();
    let mut naive = NaiveReplayer::new(params, history.clone());
    let mut max_abs_diff: f64 = 0.0;
    let mut rank_mismatches = 0;
    let mut naive_ranks = Vec::new();
    naive
        .replay_observed(stream, cfg, &Default::default(), &mut |rec, pred| {
            naive_ranks.push((rec.rank, pred.scores.values.clone()));
        })
        .unwrap();
    for (ev, (naive_rank, naive_scores)) in stream.events.iter().zip(&naive_ranks) {
        let pred = session.predict(ev.user, cfg).unwrap();
        for (a, b) in pred.scores.values.iter().zip(naive_scores) {
            max_abs_diff = max_abs_diff.max((a - b).abs());
        }
        if autoseqrec::scoring::rank_of(&pred.scores.values, ev.item as usize) != *naive_rank {
            rank_mismatches += 1;
        }
        session.apply(ev.user, ev.item).unwrap();
    }
    PathComparison { events: stream.len(), max_abs_diff, rank_mismatches }
}

// Finite-difference gradient oracle.

use autoseqrec::model::{head_gradients, head_loss, Head};
use autoseqrec::{Activation, TransitionTransform};
use ndarray::Array2;

const STEP: f64 = 1e-5;
pub const MAX_GRADIENT_REL: f64 = 1e-4;
/// Gradient magnitudes below this are compared absolutely (relative error of
/// a near-zero derivative is dominated by finite-difference rounding).
const FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
enum Tensor {
    WEnc,
    BEnc,
    WHead,
    BHead,
}

fn slice_mut(p: &mut ModelParams, head: Head, t: Tensor) -> &mut [f64] {
    let arr: &mut [f64] = match (t, head) {
        (Tensor::WEnc, _) => p.w_enc.as_slice_mut().unwrap(),
        (Tensor::BEnc, _) => p.b_enc.as_slice_mut().unwrap(),
        (Tensor::WHead, Head::Collab) => p.w_collab.as_slice_mut().unwrap(),
        (Tensor::WHead, Head::Source) => p.w_source.as_slice_mut().unwrap(),
        (Tensor::WHead, Head::Target) => p.w_target.as_slice_mut().unwrap(),
        (Tensor::BHead, Head::Collab) => p.b_collab.as_slice_mut().unwrap(),
        (Tensor::BHead, Head::Source) => p.b_source.as_slice_mut().unwrap(),
        (Tensor::BHead, Head::Target) => p.b_target.as_slice_mut().unwrap(),
    };
    arr
}

fn random_input(rng: &mut ChaCha8Rng, rows: usize, n: usize, head: Head) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, n), || match head {
        Head::Collab => (rng.gen_bool(0.4) as u8) as f64,
        _ => TransitionTransform::Log1p.apply(rng.gen_range(0..4)),
    })
}

/// Largest relative error over every parameter of one head loss.
fn max_relative_error(params: &ModelParams, x: &Array2<f64>, head: Head) -> f64 {
    let (_, grads) = head_gradients(params, x.view(), head).unwrap();
    let analytic = [
        (Tensor::WEnc, grads.w_enc.as_slice().unwrap().to_vec()),
        (Tensor::BEnc, grads.b_enc.to_vec()),
        (Tensor::WHead, grads.w_head.as_slice().unwrap().to_vec()),
        (Tensor::BHead, grads.b_head.to_vec()),
    ];
    let mut worst: f64 = 0.0;
    for (tensor, values) in analytic {
        for (idx, &a) in values.iter().enumerate() {
            let mut plus = params.clone();
            slice_mut(&mut plus, head, tensor)[idx] += STEP;
            let mut minus = params.clone();
            slice_mut(&mut minus, head, tensor)[idx] -= STEP;
            let numeric = (head_loss(&plus, x.view(), head).unwrap() - head_loss(&minus, x.view(), head).unwrap())
                / (2.0 * STEP);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}

pub struct GradientReport {
    pub checks: usize,
    pub worst: f64,
    pub where_: String,
}

/// Random instances with n <= 8, k <= 4, both decoder activations and all
/// three heads; returns the worst relative error seen.
pub fn gradient_check(rng: &mut ChaCha8Rng, instances: usize) -> GradientReport {
    let mut report = GradientReport { checks: 0, worst: 0.0, where_: String::new() };
    for instance in 0..instances {
        let n = rng.gen_range(2..=8);
        let k = rng.gen_range(1..=4);
        let rows = rng.gen_range(1..=6);
        let act = if instance % 2 == 0 { Activation::Identity } else { Activation::Sigmoid };
        let mut params = ModelParams::init(n, k, rng.gen(), act, TransitionTransform::Log1p).unwrap();
        // Non-zero biases so their gradients are exercised away from the origin.
        params.b_enc.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        params.b_collab.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        params.b_source.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        params.b_target.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        for head in Head::ALL {
            let x = random_input(rng, rows, n, head);
            let err = max_relative_error(&params, &x, head);
            report.checks += 1;
            if err > report.worst {
                report.worst = err;
                report.where_ = format!("instance {instance} {head:?} n={n} k={k} {act:?}");
            }
        }
    }
    report
}

/// Item order produced by a full sort: score descending, index ascending.
pub fn sorted_items(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

pub fn brute_rank(scores: &[f64], target: usize) -> usize {
    sorted_items(scores).iter().position(|&i| i == target).unwrap() + 1
}

pub fn random_scores(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.gen_range(1..60);
    // Coarse values force plenty of ties.
    let coarse = rng.gen_bool(0.5);
    (0..n)
        .map(|_| if coarse { rng.gen_range(0..5) as f64 } else { rng.gen_range(-1.0..1.0) })
        .collect()
}
