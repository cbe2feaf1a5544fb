//! Per-item score vectors and their weighted combination, plus ranking with
//! deterministic ties (equal scores rank by ascending item index).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Head, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Collab,
    OneHop,
    TwoHop,
    Combined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub component: Component,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    None,
    MinMax,
}

impl FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "minmax" => Ok(Normalization::MinMax),
            other => Err(Error::Config(format!("unknown normalization `{other}`"))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::MinMax => "minmax",
        })
    }
}

/// Which of the three score components take part in the combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSet {
    pub collab: bool,
    pub one_hop: bool,
    pub two_hop: bool,
}

impl ComponentSet {
    pub const ALL: ComponentSet = ComponentSet {
        collab: true,
        one_hop: true,
        two_hop: true,
    };

    pub fn is_empty(&self) -> bool {
        !(self.collab || self.one_hop || self.two_hop)
    }
}

impl Default for ComponentSet {
    fn default() -> Self {
        Self::ALL
    }
}

/// Parses a comma-separated list such as `collab,two_hop`.
impl FromStr for ComponentSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut set = ComponentSet {
            collab: false,
            one_hop: false,
            two_hop: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "collab" => set.collab = true,
                "one_hop" => set.one_hop = true,
                "two_hop" => set.two_hop = true,
                other => return Err(Error::Config(format!("unknown score component `{other}`"))),
            }
        }
        if set.is_empty() {
            return Err(Error::Config("at least one score component must be enabled".into()));
        }
        Ok(set)
    }
}

/// How the personalized transition embedding is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionEmbedding {
    /// E_s[i] ⊙ E_c[u]
    Personalized,
    /// E_s[i] alone (user factor replaced by ones).
    SourceOnly,
    /// E_c[u] alone (source factor replaced by ones).
    CollabOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub hops: usize,
    pub normalization: Normalization,
    pub components: ComponentSet,
    pub transition_embedding: TransitionEmbedding,
    /// Push already-seen items to the bottom of the ranking.
    pub filter_seen: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.3,
            lambda2: 0.3,
            hops: 2,
            normalization: Normalization::MinMax,
            components: ComponentSet::ALL,
            transition_embedding: TransitionEmbedding::Personalized,
            filter_seen: false,
        }
    }
}

const LAMBDA_SLACK: f64 = 1e-9;

impl InferenceConfig {
    pub fn with_lambdas(lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (l1, l2) = (self.lambda1, self.lambda2);
        if !(l1.is_finite() && l2.is_finite()) || l1 < 0.0 || l2 < 0.0 || l1 + l2 > 1.0 + LAMBDA_SLACK {
            return Err(Error::Config(format!(
                "lambda1={l1} lambda2={l2} must be non-negative with lambda1 + lambda2 <= 1"
            )));
        }
        if self.hops == 0 {
            return Err(Error::Config("hops must be >= 1".into()));
        }
        if self.components.is_empty() {
            return Err(Error::Config("at least one score component must be enabled".into()));
        }
        Ok(())
    }

    /// The third component is dropped when `hops == 1`.
    pub fn effective_components(&self) -> ComponentSet {
        ComponentSet {
            two_hop: self.components.two_hop && self.hops >= 2,
            ..self.components
        }
    }

    /// Weights applied to (p_c, p_t1, p_t2). Disabled components get zero
    /// and the rest are rescaled to sum to one; if every enabled weight is
    /// zero the enabled components share equally.
    pub fn weights(&self) -> [f64; 3] {
        let on = self.effective_components();
        let third = (1.0 - self.lambda1 - self.lambda2).max(0.0);
        let mut w = [
            if on.collab { self.lambda1 } else { 0.0 },
            if on.one_hop { self.lambda2 } else { 0.0 },
            if on.two_hop { third } else { 0.0 },
        ];
        if on == ComponentSet::ALL {
            return w;
        }
        let sum: f64 = w.iter().sum();
        if sum > 0.0 {
            w.iter_mut().for_each(|x| *x /= sum);
        } else {
            let enabled = [on.collab, on.one_hop, on.two_hop];
            let count = enabled.iter().filter(|&&e| e).count().max(1) as f64;
            for (x, e) in w.iter_mut().zip(enabled) {
                *x = if e { 1.0 / count } else { 0.0 };
            }
        }
        w
    }
}

/// p_c: the user's row of the reconstructed interaction matrix.
pub fn collaborative_scores(params: &ModelParams, user_embedding: &[f64]) -> ScoreVector {
    let mut values = vec![0.0; params.num_items()];
    params.decode_row_into(user_embedding, Head::Collab, &mut values);
    ScoreVector {
        values,
        component: Component::Collab,
    }
}

/// p_t1: the last item's row of the reconstructed transition matrix.
pub fn one_hop_scores(params: &ModelParams, source_embedding: &[f64]) -> ScoreVector {
    let mut values = vec![0.0; params.num_items()];
    params.decode_row_into(source_embedding, Head::Source, &mut values);
    ScoreVector {
        values,
        component: Component::OneHop,
    }
}

pub fn transition_embedding(collab: &[f64], source: &[f64], mode: TransitionEmbedding) -> Vec<f64> {
    match mode {
        TransitionEmbedding::Personalized => source.iter().zip(collab).map(|(s, c)| s * c).collect(),
        TransitionEmbedding::SourceOnly => source.to_vec(),
        TransitionEmbedding::CollabOnly => collab.to_vec(),
    }
}

/// s = v · E_tᵀ
fn project_onto_targets(v: &[f64], targets: ArrayView2<f64>) -> Vec<f64> {
    targets
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// p_t2 = (E_s[i] ⊙ E_c[u]) · E_tᵀ, computed on encoder outputs.
pub fn two_hop_scores(collab: &[f64], source: &[f64], targets: ArrayView2<f64>) -> ScoreVector {
    let v = transition_embedding(collab, source, TransitionEmbedding::Personalized);
    two_hop_from_embedding(&v, targets)
}

pub fn two_hop_from_embedding(v: &[f64], targets: ArrayView2<f64>) -> ScoreVector {
    ScoreVector {
        values: project_onto_targets(v, targets),
        component: Component::TwoHop,
    }
}

/// Repeated projection through the target table: h = 2 is [`two_hop_scores`].
pub fn multi_hop_scores(v: &[f64], targets: ArrayView2<f64>, hops: usize) -> Result<ScoreVector> {
    if hops < 2 {
        return Err(Error::Config(format!("multi-hop scoring needs hops >= 2, got {hops}")));
    }
    let mut s = project_onto_targets(v, targets);
    for _ in 2..hops {
        let k = targets.ncols();
        let mut next = vec![0.0; k];
        for (row, &sj) in targets.rows().into_iter().zip(&s) {
            for (n, &t) in next.iter_mut().zip(row.iter()) {
                *n += sj * t;
            }
        }
        s = project_onto_targets(&next, targets);
    }
    Ok(ScoreVector {
        values: s,
        component: Component::TwoHop,
    })
}

/// Rescales to [0, 1]; constant vectors become all zeros.
pub fn normalize_minmax(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    // NaN spans fail `is_finite` too.
    if !span.is_finite() || span <= 0.0 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    values.iter_mut().for_each(|v| *v = (*v - lo) / span);
}

/// Weighted sum of the enabled components per `cfg`.
pub fn combine(p_c: &[f64], p_t1: &[f64], p_t2: &[f64], cfg: &InferenceConfig) -> Result<ScoreVector> {
    cfg.validate()?;
    let n = p_c.len();
    if p_t1.len() != n || p_t2.len() != n {
        return Err(Error::Dimension(format!(
            "component lengths differ: {} / {} / {}",
            n,
            p_t1.len(),
            p_t2.len()
        )));
    }
    let w = cfg.weights();
    let mut out = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    for (weight, part) in w.iter().zip([p_c, p_t1, p_t2]) {
        if *weight == 0.0 {
            continue;
        }
        let src: &[f64] = match cfg.normalization {
            Normalization::None => part,
            Normalization::MinMax => {
                scratch.copy_from_slice(part);
                normalize_minmax(&mut scratch);
                &scratch
            }
        };
        for (o, &s) in out.iter_mut().zip(src) {
            *o += weight * s;
        }
    }
    Ok(ScoreVector {
        values: out,
        component: Component::Combined,
    })
}

/// 1 + #(strictly higher scores) + #(equal scores at a smaller index).
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    let mut rank = 1;
    for (j, &s) in scores.iter().enumerate() {
        if s > t || (s == t && j < target) {
            rank += 1;
        }
    }
    rank
}

fn descending(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// The `k` best items, highest score first, ties by ascending index.
pub fn top_k(scores: &[f64], k: usize) -> Result<Vec<u32>> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("top-k size {k} must lie in 1..={n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let cmp = descending(scores);
    if k < n {
        idx.select_nth_unstable_by(k - 1, &cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(&cmp);
    Ok(idx.into_iter().map(|i| i as u32).collect())
}
