//! Shared encoder, three decoder heads, reconstruction losses and the
//! mini-batch-union trainer.
//!
//! The encoder maps any n-wide row (a row of R, of Φ(T) or of Φ(T)ᵀ) to a
//! k-wide embedding through one sigmoid layer. Each head maps an embedding back
//! to n outputs. Losses are squared Frobenius norms over full rows, zeros
//! included.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrices::MatrixState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

/// Map Φ applied to raw transition counts before they reach the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionTransform {
    Raw,
    Log1p,
}

impl TransitionTransform {
    #[inline]
    pub fn apply(self, count: u32) -> f64 {
        match self {
            TransitionTransform::Raw => count as f64,
            TransitionTransform::Log1p => (count as f64).ln_1p(),
        }
    }
}

impl FromStr for TransitionTransform {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(TransitionTransform::Raw),
            "log1p" => Ok(TransitionTransform::Log1p),
            other => Err(Error::Config(format!("unknown transition transform `{other}`"))),
        }
    }
}

impl fmt::Display for TransitionTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransitionTransform::Raw => "raw",
            TransitionTransform::Log1p => "log1p",
        })
    }
}

/// Which decoder, and which input matrix feeds it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Head {
    /// Rows of R.
    Collab,
    /// Rows of Φ(T).
    Source,
    /// Rows of Φ(T)ᵀ.
    Target,
}

impl Head {
    pub const ALL: [Head; 3] = [Head::Collab, Head::Source, Head::Target];
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// n x k
    pub w_enc: Array2<f64>,
    pub b_enc: Array1<f64>,
    /// k x n each
    pub w_collab: Array2<f64>,
    pub b_collab: Array1<f64>,
    pub w_source: Array2<f64>,
    pub b_source: Array1<f64>,
    pub w_target: Array2<f64>,
    pub b_target: Array1<f64>,
    pub decoder_activation: Activation,
    pub transform: TransitionTransform,
}

impl ModelParams {
    /// Uniform weights in ±1/√n (encoder) and ±1/√k (decoders), zero biases.
    pub fn init(
        num_items: usize,
        hidden: usize,
        seed: u64,
        decoder_activation: Activation,
        transform: TransitionTransform,
    ) -> Result<Self> {
        if num_items == 0 || hidden == 0 {
            return Err(Error::Config(format!(
                "model dimensions must be positive (n={num_items}, k={hidden})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc_bound = 1.0 / (num_items as f64).sqrt();
        let dec_bound = 1.0 / (hidden as f64).sqrt();
        let enc = Uniform::new_inclusive(-enc_bound, enc_bound);
        let dec = Uniform::new_inclusive(-dec_bound, dec_bound);
        let mut fill = |rows, cols, dist: &Uniform<f64>| {
            Array2::from_shape_simple_fn((rows, cols), || dist.sample(&mut rng))
        };
        let w_enc = fill(num_items, hidden, &enc);
        let w_collab = fill(hidden, num_items, &dec);
        let w_source = fill(hidden, num_items, &dec);
        let w_target = fill(hidden, num_items, &dec);
        Ok(Self {
            w_enc,
            b_enc: Array1::zeros(hidden),
            w_collab,
            b_collab: Array1::zeros(num_items),
            w_source,
            b_source: Array1::zeros(num_items),
            w_target,
            b_target: Array1::zeros(num_items),
            decoder_activation,
            transform,
        })
    }

    /// All-zero weights and biases.
    pub fn zeros(num_items: usize, hidden: usize, decoder_activation: Activation, transform: TransitionTransform) -> Self {
        Self {
            w_enc: Array2::zeros((num_items, hidden)),
            b_enc: Array1::zeros(hidden),
            w_collab: Array2::zeros((hidden, num_items)),
            b_collab: Array1::zeros(num_items),
            w_source: Array2::zeros((hidden, num_items)),
            b_source: Array1::zeros(num_items),
            w_target: Array2::zeros((hidden, num_items)),
            b_target: Array1::zeros(num_items),
            decoder_activation,
            transform,
        }
    }

    pub fn num_items(&self) -> usize {
        self.w_enc.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w_enc.ncols()
    }

    pub fn head(&self, head: Head) -> (&Array2<f64>, &Array1<f64>) {
        match head {
            Head::Collab => (&self.w_collab, &self.b_collab),
            Head::Source => (&self.w_source, &self.b_source),
            Head::Target => (&self.w_target, &self.b_target),
        }
    }

    fn head_mut(&mut self, head: Head) -> (&mut Array2<f64>, &mut Array1<f64>) {
        match head {
            Head::Collab => (&mut self.w_collab, &mut self.b_collab),
            Head::Source => (&mut self.w_source, &mut self.b_source),
            Head::Target => (&mut self.w_target, &mut self.b_target),
        }
    }

    /// Checks internal shape consistency and finiteness.
    pub fn validate(&self) -> Result<()> {
        let (n, k) = self.w_enc.dim();
        if n == 0 || k == 0 {
            return Err(Error::Dimension("empty encoder".into()));
        }
        if self.b_enc.len() != k {
            return Err(Error::Dimension(format!("encoder bias {} != k {k}", self.b_enc.len())));
        }
        for head in Head::ALL {
            let (w, b) = self.head(head);
            if w.dim() != (k, n) || b.len() != n {
                return Err(Error::Dimension(format!(
                    "{head:?} head is {:?}/{} but expected ({k}, {n})/{n}",
                    w.dim(),
                    b.len()
                )));
            }
        }
        if self.tensors().iter().any(|t| t.iter().any(|x| !x.is_finite())) {
            return Err(Error::Dimension("non-finite parameter".into()));
        }
        Ok(())
    }

    fn tensors(&self) -> [&[f64]; 8] {
        [
            self.w_enc.as_slice().expect("standard layout"),
            self.b_enc.as_slice().expect("standard layout"),
            self.w_collab.as_slice().expect("standard layout"),
            self.b_collab.as_slice().expect("standard layout"),
            self.w_source.as_slice().expect("standard layout"),
            self.b_source.as_slice().expect("standard layout"),
            self.w_target.as_slice().expect("standard layout"),
            self.b_target.as_slice().expect("standard layout"),
        ]
    }

    /// Hex SHA-256 over every parameter's bit pattern.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in self.tensors() {
            for x in t {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// σ(X·W_e + b_e), one embedding row per input row.
    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.num_items() {
            return Err(Error::Dimension(format!(
                "encoder input width {} != n {}",
                x.ncols(),
                self.num_items()
            )));
        }
        let mut z = x.dot(&self.w_enc);
        z += &self.b_enc;
        z.mapv_inplace(sigmoid);
        Ok(z)
    }

    /// Encodes one row given as (column, value) pairs of its non-zero entries.
    pub fn encode_sparse_into(&self, entries: impl IntoIterator<Item = (usize, f64)>, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.hidden());
        out.copy_from_slice(self.b_enc.as_slice().expect("standard layout"));
        for (col, value) in entries {
            let w = self.w_enc.row(col);
            for (o, &wv) in out.iter_mut().zip(w.iter()) {
                *o += value * wv;
            }
        }
        for o in out.iter_mut() {
            *o = sigmoid(*o);
        }
    }

    /// act(E·W_h + b_h) for the given head.
    pub fn decode(&self, e: ArrayView2<f64>, head: Head) -> Result<Array2<f64>> {
        if e.ncols() != self.hidden() {
            return Err(Error::Dimension(format!(
                "decoder input width {} != k {}",
                e.ncols(),
                self.hidden()
            )));
        }
        let (w, b) = self.head(head);
        let mut z = e.dot(w);
        z += b;
        let act = self.decoder_activation;
        if act != Activation::Identity {
            z.mapv_inplace(|v| act.apply(v));
        }
        Ok(z)
    }

    /// Decodes a single embedding into `out` (length n).
    pub fn decode_row_into(&self, e: &[f64], head: Head, out: &mut [f64]) {
        let (w, b) = self.head(head);
        out.copy_from_slice(b.as_slice().expect("standard layout"));
        for (r, &ev) in e.iter().enumerate() {
            if ev == 0.0 {
                continue;
            }
            for (o, &wv) in out.iter_mut().zip(w.row(r).iter()) {
                *o += ev * wv;
            }
        }
        let act = self.decoder_activation;
        if act != Activation::Identity {
            for o in out.iter_mut() {
                *o = act.apply(*o);
            }
        }
    }
}

/// Dense training inputs: R, Φ(T) and Φ(T)ᵀ as f64 matrices.
#[derive(Debug, Clone)]
pub struct TrainingInputs {
    pub collab: Array2<f64>,
    pub source: Array2<f64>,
    pub target: Array2<f64>,
}

impl TrainingInputs {
    pub fn from_state(state: &MatrixState, transform: TransitionTransform) -> Self {
        let (m, n) = (state.num_users(), state.num_items());
        let collab = Array2::from_shape_vec((m, n), state.interactions().iter().map(|&x| x as f64).collect())
            .expect("R shape");
        let source = Array2::from_shape_vec((n, n), state.transitions().iter().map(|&c| transform.apply(c)).collect())
            .expect("T shape");
        let target = source.t().as_standard_layout().into_owned();
        Self { collab, source, target }
    }

    pub fn matrix(&self, head: Head) -> &Array2<f64> {
        match head {
            Head::Collab => &self.collab,
            Head::Source => &self.source,
            Head::Target => &self.target,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Losses {
    pub collab: f64,
    pub source: f64,
    pub target: f64,
    pub total: f64,
}

const LOSS_CHUNK: usize = 512;

/// Squared reconstruction error of one head over all rows of its input.
pub fn head_loss(params: &ModelParams, input: ArrayView2<f64>, head: Head) -> Result<f64> {
    let mut loss = 0.0;
    for chunk in input.axis_chunks_iter(Axis(0), LOSS_CHUNK) {
        let e = params.encode(chunk)?;
        let y = params.decode(e.view(), head)?;
        loss += Zip::from(&y).and(&chunk).fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b));
    }
    Ok(loss)
}

/// (L_c, L_s, L_t, L) with L = L_c + L_s + L_t.
pub fn reconstruction_loss(params: &ModelParams, inputs: &TrainingInputs) -> Result<Losses> {
    let collab = head_loss(params, inputs.collab.view(), Head::Collab)?;
    let source = head_loss(params, inputs.source.view(), Head::Source)?;
    let target = head_loss(params, inputs.target.view(), Head::Target)?;
    Ok(Losses {
        collab,
        source,
        target,
        total: collab + source + target,
    })
}

pub fn reconstruction_loss_for_state(params: &ModelParams, state: &MatrixState) -> Result<Losses> {
    reconstruction_loss(params, &TrainingInputs::from_state(state, params.transform))
}

/// Gradients of one head's loss w.r.t. the encoder and that head.
#[derive(Debug, Clone)]
pub struct HeadGradients {
    pub w_enc: Array2<f64>,
    pub b_enc: Array1<f64>,
    pub w_head: Array2<f64>,
    pub b_head: Array1<f64>,
}

/// Loss ‖X − g_h(f(X))‖² over the rows of `x` and its analytic gradient.
pub fn head_gradients(params: &ModelParams, x: ArrayView2<f64>, head: Head) -> Result<(f64, HeadGradients)> {
    let e = params.encode(x)?;
    let y = params.decode(e.view(), head)?;
    let (w_head, _) = params.head(head);

    let mut loss = 0.0;
    let mut dz = Array2::<f64>::zeros(y.raw_dim());
    let sigmoid_out = params.decoder_activation == Activation::Sigmoid;
    Zip::from(&mut dz).and(&y).and(&x).for_each(|d, &yv, &xv| {
        let r = yv - xv;
        loss += r * r;
        *d = if sigmoid_out { 2.0 * r * yv * (1.0 - yv) } else { 2.0 * r };
    });

    let gw_head = e.t().dot(&dz);
    let gb_head = dz.sum_axis(Axis(0));
    let mut de = dz.dot(&w_head.t());
    Zip::from(&mut de).and(&e).for_each(|d, &ev| *d *= ev * (1.0 - ev));
    let gw_enc = x.t().dot(&de);
    let gb_enc = de.sum_axis(Axis(0));
    Ok((
        loss,
        HeadGradients {
            w_enc: gw_enc,
            b_enc: gb_enc,
            w_head: gw_head,
            b_head: gb_head,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    /// Validate every `every` epochs.
    pub every: usize,
    /// Stop after this many validations without improvement.
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decoder_activation: Activation,
    pub transform: TransitionTransform,
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 128,
            seed: 42,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decoder_activation: Activation::Identity,
            transform: TransitionTransform::Log1p,
            early_stop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden size must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::Config("optimizer moments must lie in [0, 1) and epsilon > 0".into()));
        }
        if let Some(es) = self.early_stop {
            if es.every == 0 || es.patience == 0 {
                return Err(Error::Config("early-stop every/patience must be >= 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub losses: Losses,
    pub millis: u128,
    pub validation: Option<f64>,
}

impl EpochStats {
    /// `key=value` progress line. `l_*` are squared norms, `fro_*` unsquared.
    pub fn log_line(&self) -> String {
        let l = &self.losses;
        let mut s = format!(
            "epoch={} l_c={:.6} l_s={:.6} l_t={:.6} l={:.6} fro_c={:.6} fro_s={:.6} fro_t={:.6} ms={}",
            self.epoch,
            l.collab,
            l.source,
            l.target,
            l.total,
            l.collab.sqrt(),
            l.source.sqrt(),
            l.target.sqrt(),
            self.millis
        );
        if let Some(v) = self.validation {
            s.push_str(&format!(" val_mrr={v:.6}"));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub initial: Losses,
    /// One entry per completed epoch, starting at epoch 1.
    pub history: Vec<EpochStats>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
struct Moments<D: ndarray::Dimension> {
    m: ndarray::Array<f64, D>,
    v: ndarray::Array<f64, D>,
    step: i32,
}

impl<D: ndarray::Dimension> Moments<D> {
    fn like(a: &ndarray::Array<f64, D>) -> Self {
        Self {
            m: ndarray::Array::zeros(a.raw_dim()),
            v: ndarray::Array::zeros(a.raw_dim()),
            step: 0,
        }
    }

    fn update(&mut self, param: &mut ndarray::Array<f64, D>, grad: &ndarray::Array<f64, D>, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let (lr, eps) = (cfg.learning_rate, cfg.epsilon);
        Zip::from(param)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(grad)
            .for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            });
    }
}

/// Adaptive-moment optimizer state; each tensor keeps its own step count
/// because a head only advances when one of its batches is drawn.
#[derive(Debug, Clone)]
struct Optimizer {
    w_enc: Moments<ndarray::Ix2>,
    b_enc: Moments<ndarray::Ix1>,
    heads: [(Moments<ndarray::Ix2>, Moments<ndarray::Ix1>); 3],
}

impl Optimizer {
    fn new(p: &ModelParams) -> Self {
        let head = |h| {
            let (w, b) = p.head(h);
            (Moments::like(w), Moments::like(b))
        };
        Self {
            w_enc: Moments::like(&p.w_enc),
            b_enc: Moments::like(&p.b_enc),
            heads: [head(Head::Collab), head(Head::Source), head(Head::Target)],
        }
    }

    fn step(&mut self, p: &mut ModelParams, head: Head, g: &HeadGradients, cfg: &TrainConfig) {
        self.w_enc.update(&mut p.w_enc, &g.w_enc, cfg);
        self.b_enc.update(&mut p.b_enc, &g.b_enc, cfg);
        let idx = match head {
            Head::Collab => 0,
            Head::Source => 1,
            Head::Target => 2,
        };
        let (w, b) = p.head_mut(head);
        self.heads[idx].0.update(w, &g.w_head, cfg);
        self.heads[idx].1.update(b, &g.b_head, cfg);
    }
}

/// One epoch's batch plan: row batches of each source matrix, shuffled
/// within each matrix and then across the union.
pub fn epoch_batches(rng: &mut ChaCha8Rng, rows: [usize; 3], batch_size: usize) -> Vec<(Head, Vec<usize>)> {
    let mut batches = Vec::new();
    for (head, count) in Head::ALL.into_iter().zip(rows) {
        let mut idx: Vec<usize> = (0..count).collect();
        idx.shuffle(rng);
        for chunk in idx.chunks(batch_size) {
            batches.push((head, chunk.to_vec()));
        }
    }
    batches.shuffle(rng);
    batches
}

pub type Validator<'a> = dyn FnMut(&ModelParams) -> Result<f64> + 'a;

/// Trains a fresh model on the state's matrices.
pub fn train(
    state: &MatrixState,
    cfg: &TrainConfig,
    validator: Option<&mut Validator<'_>>,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let inputs = TrainingInputs::from_state(state, cfg.transform);
    let params = ModelParams::init(state.num_items(), cfg.hidden, cfg.seed, cfg.decoder_activation, cfg.transform)?;
    train_from(params, &inputs, cfg, validator, on_epoch)
}

/// Continues training `params` on precomputed inputs.
pub fn train_from(
    mut params: ModelParams,
    inputs: &TrainingInputs,
    cfg: &TrainConfig,
    mut validator: Option<&mut Validator<'_>>,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    // Batch order stream is independent of the init stream.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut opt = Optimizer::new(&params);
    let initial = reconstruction_loss(&params, inputs)?;
    if !initial.total.is_finite() {
        return Err(Error::Diverged { epoch: 0, loss: initial.total });
    }
    let rows = [inputs.collab.nrows(), inputs.source.nrows(), inputs.target.nrows()];

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        for (head, idx) in epoch_batches(&mut rng, rows, cfg.batch_size) {
            let x = inputs.matrix(head).select(Axis(0), &idx);
            let (loss, grads) = head_gradients(&params, x.view(), head)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            opt.step(&mut params, head, &grads, cfg);
        }
        let losses = reconstruction_loss(&params, inputs)?;
        if !losses.total.is_finite() {
            return Err(Error::Diverged { epoch, loss: losses.total });
        }
        let mut validation = None;
        let mut stop = false;
        if let (Some(es), Some(v)) = (cfg.early_stop, validator.as_deref_mut()) {
            if epoch % es.every == 0 || epoch == cfg.epochs {
                let score = v(&params)?;
                validation = Some(score);
                match &best {
                    Some((b, _, _)) if score <= *b => {
                        stale += 1;
                        stop = stale >= es.patience;
                    }
                    _ => {
                        best = Some((score, epoch, params.clone()));
                        stale = 0;
                    }
                }
            }
        }
        let stats = EpochStats {
            epoch,
            losses,
            millis: start.elapsed().as_millis(),
            validation,
        };
        on_epoch(&stats);
        history.push(stats);
        if stop {
            break;
        }
    }
    let (params, best_epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (params, history.len()),
    };
    Ok(TrainOutcome {
        params,
        initial,
        history,
        best_epoch,
    })
}
