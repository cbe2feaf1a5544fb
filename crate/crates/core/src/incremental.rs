//! Cached encoder outputs and the predict-then-update replay loop.
//!
//! Weights never change here. Each applied interaction (u, i) with previous
//! item j changes row u of R, row j of T and column i of T, so exactly
//! E_c[u], E_s[j] and E_t[i] are re-encoded.

use std::time::Instant;

use ndarray::{Array2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{check_index, Event, InteractionLog};
use crate::matrices::{MatrixState, Touched};
use crate::model::ModelParams;
use crate::scoring::{
    collaborative_scores, combine, multi_hop_scores, one_hop_scores, rank_of, transition_embedding, Component,
    InferenceConfig, ScoreVector, TransitionEmbedding,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCache {
    /// m x k, encoder outputs for rows of R.
    pub collab: Array2<f64>,
    /// n x k, encoder outputs for rows of Φ(T).
    pub source: Array2<f64>,
    /// n x k, encoder outputs for columns of Φ(T).
    pub target: Array2<f64>,
}

const WARM_CHUNK: usize = 256;

fn encode_dense_rows(
    params: &ModelParams,
    rows: usize,
    fill: impl Fn(usize, &mut [f64]),
) -> Result<Array2<f64>> {
    let n = params.num_items();
    let mut out = Array2::zeros((rows, params.hidden()));
    let mut start = 0;
    while start < rows {
        let len = WARM_CHUNK.min(rows - start);
        let mut x = Array2::<f64>::zeros((len, n));
        for (r, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
            fill(start + r, row.as_slice_mut().expect("standard layout"));
        }
        let e = params.encode(x.view())?;
        out.slice_mut(ndarray::s![start..start + len, ..]).assign(&e);
        start += len;
    }
    Ok(out)
}

impl EmbeddingCache {
    /// Full recomputation of all three tables.
    pub fn warm(state: &MatrixState, params: &ModelParams) -> Result<Self> {
        let n = state.num_items();
        if params.num_items() != n {
            return Err(Error::Dimension(format!(
                "model has n={} but matrices have n={n}",
                params.num_items()
            )));
        }
        let phi = params.transform;
        let collab = encode_dense_rows(params, state.num_users(), |u, row| {
            for (o, &x) in row.iter_mut().zip(state.interaction_row(u as u32)) {
                *o = x as f64;
            }
        })?;
        let source = encode_dense_rows(params, n, |j, row| {
            for (o, &c) in row.iter_mut().zip(state.transition_row(j as u32)) {
                *o = phi.apply(c);
            }
        })?;
        let target = encode_dense_rows(params, n, |i, row| {
            for (o, c) in row.iter_mut().zip(state.transition_col(i as u32)) {
                *o = phi.apply(c);
            }
        })?;
        Ok(Self { collab, source, target })
    }

    pub fn hidden(&self) -> usize {
        self.collab.ncols()
    }

    pub fn collab_row(&self, user: u32) -> &[f64] {
        row_slice(&self.collab, user)
    }

    pub fn source_row(&self, item: u32) -> &[f64] {
        row_slice(&self.source, item)
    }

    pub fn target_row(&self, item: u32) -> &[f64] {
        row_slice(&self.target, item)
    }

    pub fn refresh_user(&mut self, state: &MatrixState, params: &ModelParams, user: u32) {
        let entries = state
            .interaction_row(user)
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0)
            .map(|(i, _)| (i, 1.0));
        params.encode_sparse_into(entries, row_slice_mut(&mut self.collab, user));
    }

    pub fn refresh_source(&mut self, state: &MatrixState, params: &ModelParams, item: u32) {
        let phi = params.transform;
        let entries = state
            .transition_row(item)
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(i, &c)| (i, phi.apply(c)));
        params.encode_sparse_into(entries, row_slice_mut(&mut self.source, item));
    }

    pub fn refresh_target(&mut self, state: &MatrixState, params: &ModelParams, item: u32) {
        let phi = params.transform;
        let entries = state
            .transition_col(item)
            .enumerate()
            .filter(|(_, c)| *c != 0)
            .map(|(j, c)| (j, phi.apply(c)));
        params.encode_sparse_into(entries, row_slice_mut(&mut self.target, item));
    }

    /// Re-encodes the rows affected by one interaction; returns how many.
    pub fn refresh(&mut self, state: &MatrixState, params: &ModelParams, touched: &Touched) -> usize {
        self.refresh_user(state, params, touched.user);
        let mut rows = 1;
        if let Some(j) = touched.source_row {
            self.refresh_source(state, params, j);
            rows += 1;
        }
        if let Some(i) = touched.target_col {
            self.refresh_target(state, params, i);
            rows += 1;
        }
        rows
    }
}

fn row_slice(a: &Array2<f64>, r: u32) -> &[f64] {
    let k = a.ncols();
    let start = r as usize * k;
    &a.as_slice().expect("standard layout")[start..start + k]
}

fn row_slice_mut(a: &mut Array2<f64>, r: u32) -> &mut [f64] {
    let k = a.ncols();
    let start = r as usize * k;
    &mut a.as_slice_mut().expect("standard layout")[start..start + k]
}

/// Multi-hop scores keyed by (embedding mode, hops).
pub type MultiHopScores = Vec<((TransitionEmbedding, usize), Vec<f64>)>;

/// All score components for one user at one moment; lets several inference
/// configurations be evaluated from a single pass over the encoder outputs.
#[derive(Debug, Clone)]
pub struct EventComponents {
    pub user: u32,
    pub collab: Vec<f64>,
    /// (p_t1, p_t2 per requested (embedding mode, hops)) when the user has a last item.
    pub transition: Option<(Vec<f64>, MultiHopScores)>,
}

impl EventComponents {
    pub fn compute(
        user: u32,
        state: &MatrixState,
        cache: &EmbeddingCache,
        params: &ModelParams,
        variants: &[(TransitionEmbedding, usize)],
    ) -> Result<Self> {
        check_index("user", user as usize, state.num_users())?;
        let ec = cache.collab_row(user);
        let collab = collaborative_scores(params, ec).values;
        let transition = match state.last_item(user) {
            None => None,
            Some(last) => {
                let es = cache.source_row(last);
                let p_t1 = one_hop_scores(params, es).values;
                let mut multi = Vec::with_capacity(variants.len());
                for &(mode, hops) in variants {
                    if multi.iter().any(|(key, _)| *key == (mode, hops)) {
                        continue;
                    }
                    let v = transition_embedding(ec, es, mode);
                    let p = if hops >= 2 {
                        multi_hop_scores(&v, cache.target.view(), hops)?.values
                    } else {
                        vec![0.0; state.num_items()]
                    };
                    multi.push(((mode, hops), p));
                }
                Some((p_t1, multi))
            }
        };
        Ok(Self { user, collab, transition })
    }

    /// Final scores under `cfg`; falls back to p_c alone for users without a last item.
    pub fn score(&self, cfg: &InferenceConfig, state: &MatrixState) -> Result<Prediction> {
        let (mut scores, fallback) = match &self.transition {
            None => (
                ScoreVector {
                    values: self.collab.clone(),
                    component: Component::Collab,
                },
                true,
            ),
            Some((p_t1, multi)) => {
                let key = (cfg.transition_embedding, cfg.hops);
                let p_t2 = multi
                    .iter()
                    .find(|(k, _)| *k == key)
                    .map(|(_, v)| v)
                    .ok_or_else(|| Error::Config(format!("components not computed for {key:?}")))?;
                (combine(&self.collab, p_t1, p_t2, cfg)?, false)
            }
        };
        if cfg.filter_seen {
            for (s, &seen) in scores.values.iter_mut().zip(state.interaction_row(self.user)) {
                if seen != 0 {
                    *s = f64::MIN;
                }
            }
        }
        Ok(Prediction { scores, fallback })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: ScoreVector,
    /// True when only collaborative scores were available.
    pub fallback: bool,
}

pub fn predict_next(
    user: u32,
    state: &MatrixState,
    cache: &EmbeddingCache,
    params: &ModelParams,
    cfg: &InferenceConfig,
) -> Result<Prediction> {
    cfg.validate()?;
    let comps = EventComponents::compute(user, state, cache, params, &[(cfg.transition_embedding, cfg.hops)])?;
    comps.score(cfg, state)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplayRecord {
    pub event_index: usize,
    pub user: u32,
    pub item: u32,
    pub rank: usize,
    pub reciprocal_rank: f64,
    pub hit: bool,
    pub latency_us: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReplayOptions {
    /// Cutoff for the `hit` flag.
    pub top_k: usize,
    /// Skip (instead of scoring with p_c alone) events of users with no history.
    pub skip_cold: bool,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self { top_k: 10, skip_cold: false }
    }
}

fn record(index: usize, ev: &Event, rank: usize, fallback: bool, latency_us: f64, top_k: usize) -> ReplayRecord {
    ReplayRecord {
        event_index: index,
        user: ev.user,
        item: ev.item,
        rank,
        reciprocal_rank: 1.0 / rank as f64,
        hit: rank <= top_k,
        latency_us,
        fallback,
    }
}

/// Mutable serving state: matrices plus the cache kept in sync with them.
#[derive(Debug, Clone)]
pub struct Session<'p> {
    pub params: &'p ModelParams,
    pub state: MatrixState,
    pub cache: EmbeddingCache,
}

impl<'p> Session<'p> {
    pub fn new(params: &'p ModelParams, state: MatrixState) -> Result<Self> {
        let cache = EmbeddingCache::warm(&state, params)?;
        Ok(Self { params, state, cache })
    }

    pub fn predict(&self, user: u32, cfg: &InferenceConfig) -> Result<Prediction> {
        predict_next(user, &self.state, &self.cache, self.params, cfg)
    }

    /// Applies an interaction and refreshes the touched cache rows.
    pub fn apply(&mut self, user: u32, item: u32) -> Result<Touched> {
        let touched = self.state.apply(user, item)?;
        self.cache.refresh(&self.state, self.params, &touched);
        Ok(touched)
    }

    /// Applies events without scoring them.
    pub fn absorb(&mut self, log: &InteractionLog) -> Result<()> {
        for ev in &log.events {
            self.apply(ev.user, ev.item)?;
        }
        Ok(())
    }

    /// Predict, rank the true item, then apply it. `None` when skipped.
    pub fn step(
        &mut self,
        index: usize,
        ev: &Event,
        cfg: &InferenceConfig,
        opts: &ReplayOptions,
        observe: &mut dyn FnMut(&ReplayRecord, &Prediction),
    ) -> Result<Option<ReplayRecord>> {
        check_index("item", ev.item as usize, self.state.num_items())?;
        let start = Instant::now();
        let pred = self.predict(ev.user, cfg)?;
        if pred.fallback && opts.skip_cold {
            self.apply(ev.user, ev.item)?;
            return Ok(None);
        }
        let rank = rank_of(&pred.scores.values, ev.item as usize);
        self.apply(ev.user, ev.item)?;
        let latency = start.elapsed().as_secs_f64() * 1e6;
        let rec = record(index, ev, rank, pred.fallback, latency, opts.top_k);
        observe(&rec, &pred);
        Ok(Some(rec))
    }

    pub fn replay(&mut self, stream: &InteractionLog, cfg: &InferenceConfig, opts: &ReplayOptions) -> Result<Vec<ReplayRecord>> {
        self.replay_observed(stream, cfg, opts, &mut |_, _| {})
    }

    pub fn replay_observed(
        &mut self,
        stream: &InteractionLog,
        cfg: &InferenceConfig,
        opts: &ReplayOptions,
        observe: &mut dyn FnMut(&ReplayRecord, &Prediction),
    ) -> Result<Vec<ReplayRecord>> {
        cfg.validate()?;
        let mut out = Vec::with_capacity(stream.len());
        for (idx, ev) in stream.events.iter().enumerate() {
            if let Some(rec) = self.step(idx, ev, cfg, opts, observe)? {
                out.push(rec);
            }
        }
        Ok(out)
    }

    /// Replays once, ranking the true item under every configuration.
    /// Returns one rank list per configuration and the fallback count.
    pub fn replay_many(
        &mut self,
        stream: &InteractionLog,
        cfgs: &[InferenceConfig],
        opts: &ReplayOptions,
    ) -> Result<(Vec<Vec<usize>>, usize)> {
        for c in cfgs {
            c.validate()?;
        }
        let variants: Vec<_> = cfgs.iter().map(|c| (c.transition_embedding, c.hops)).collect();
        let mut ranks = vec![Vec::with_capacity(stream.len()); cfgs.len()];
        let mut fallbacks = 0;
        for ev in &stream.events {
            check_index("item", ev.item as usize, self.state.num_items())?;
            let comps = EventComponents::compute(ev.user, &self.state, &self.cache, self.params, &variants)?;
            let cold = comps.transition.is_none();
            if !(cold && opts.skip_cold) {
                fallbacks += cold as usize;
                for (cfg, out) in cfgs.iter().zip(ranks.iter_mut()) {
                    let pred = comps.score(cfg, &self.state)?;
                    out.push(rank_of(&pred.scores.values, ev.item as usize));
                }
            }
            self.apply(ev.user, ev.item)?;
        }
        Ok((ranks, fallbacks))
    }
}

/// Reference path: rebuild matrices and every embedding before each event.
#[derive(Debug, Clone)]
pub struct NaiveReplayer<'p> {
    pub params: &'p ModelParams,
    history: InteractionLog,
    count_self_transitions: bool,
}

impl<'p> NaiveReplayer<'p> {
    pub fn new(params: &'p ModelParams, history: InteractionLog) -> Self {
        Self {
            params,
            history,
            count_self_transitions: true,
        }
    }

    pub fn without_self_transitions(mut self) -> Self {
        self.count_self_transitions = false;
        self
    }

    fn rebuild(&self) -> Result<MatrixState> {
        let mut state = if self.count_self_transitions {
            MatrixState::new(self.history.num_users, self.history.num_items)
        } else {
            MatrixState::without_self_transitions(self.history.num_users, self.history.num_items)
        };
        state.extend(&self.history)?;
        Ok(state)
    }

    pub fn predict(&self, user: u32, cfg: &InferenceConfig) -> Result<Prediction> {
        let state = self.rebuild()?;
        let cache = EmbeddingCache::warm(&state, self.params)?;
        predict_next(user, &state, &cache, self.params, cfg)
    }

    pub fn replay_observed(
        &mut self,
        stream: &InteractionLog,
        cfg: &InferenceConfig,
        opts: &ReplayOptions,
        observe: &mut dyn FnMut(&ReplayRecord, &Prediction),
    ) -> Result<Vec<ReplayRecord>> {
        let mut out = Vec::with_capacity(stream.len());
        for (idx, ev) in stream.events.iter().enumerate() {
            let start = Instant::now();
            let pred = self.predict(ev.user, cfg)?;
            self.history.events.push(*ev);
            if pred.fallback && opts.skip_cold {
                continue;
            }
            let rank = rank_of(&pred.scores.values, ev.item as usize);
            let rec = record(idx, ev, rank, pred.fallback, start.elapsed().as_secs_f64() * 1e6, opts.top_k);
            observe(&rec, &pred);
            out.push(rec);
        }
        Ok(out)
    }
}
