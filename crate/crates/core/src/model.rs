//! Linear softmax step predictor trained with local mini-batch SGD.
//!
//! Each step is featurized into a hashed, L2-normalized bag of tokens. Two
//! softmax heads share those features: one over the nine action types and
//! one over hashed argument slots. Parameters are a flat [`ParamVector`]:
//! the weight rows of every output class (action classes first), followed by
//! one bias per class.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{app_key, ActionType, Episode, Step};
use crate::eval::tokenize;
use crate::hashing::fnv1a;

pub const N_ACTIONS: usize = ActionType::ALL.len();
pub const DEFAULT_FEATURE_DIM: usize = 256;
pub const DEFAULT_ARG_SLOTS: usize = 64;
/// Positions at or beyond this index share one bucket.
pub const POSITION_BUCKETS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("DimensionMismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("EmptyClient: client has no episodes")]
    EmptyClient,
    #[error("EmptyBatch: loss needs at least one example")]
    EmptyBatch,
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch { expected, got })
    }
}

/// Feature dimension `d` and argument vocabulary size `V`; the action head is
/// always [`N_ACTIONS`] wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub feature_dim: usize,
    pub arg_slots: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            feature_dim: DEFAULT_FEATURE_DIM,
            arg_slots: DEFAULT_ARG_SLOTS,
        }
    }
}

impl ModelShape {
    pub fn new(feature_dim: usize, arg_slots: usize) -> Result<Self> {
        if feature_dim < 16 {
            return Err(ModelError::InvalidShape(format!("feature_dim {feature_dim} < 16")));
        }
        if arg_slots < 2 {
            return Err(ModelError::InvalidShape(format!("arg_slots {arg_slots} < 2")));
        }
        Ok(Self { feature_dim, arg_slots })
    }

    pub fn n_classes(&self) -> usize {
        N_ACTIONS + self.arg_slots
    }

    /// `d·(K+V) + (K+V)`.
    pub fn n_params(&self) -> usize {
        self.n_classes() * (self.feature_dim + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn for_shape(shape: &ModelShape) -> Self {
        Self::zeros(shape.n_params())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn l2_distance(&self, other: &ParamVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// Argument slot: 0 for empty arguments, otherwise a stable hash into `1..slots`.
pub fn arg_slot(args: &str, slots: usize) -> usize {
    let norm = args.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    if norm.is_empty() {
        0
    } else {
        1 + (fnv1a(norm.as_bytes()) % (slots as u64 - 1)) as usize
    }
}

pub fn arg_token(slot: usize) -> String {
    format!("a{slot:02}")
}

/// Canonical response text `"<action_type> a<slot>"`.
pub fn response_text(action: ActionType, slot: usize) -> String {
    format!("{} {}", action.as_str(), arg_token(slot))
}

pub fn gold_response(step: &Step, shape: &ModelShape) -> String {
    response_text(step.action_type, arg_slot(&step.action_args, shape.arg_slots))
}

fn step_tokens(episode: &Episode, step: &Step, low_level: bool) -> Vec<String> {
    let app = app_key(&episode.app);
    let cat = episode.category.as_str();
    let bucket = step.index.min(POSITION_BUCKETS - 1);
    let mut tokens = vec![
        format!("app={app}"),
        format!("cat={cat}"),
        format!("pos={bucket}"),
        format!("app*pos={app}|{bucket}"),
        format!("cat*pos={cat}|{bucket}"),
    ];
    tokens.extend(tokenize(&episode.instruction).into_iter().map(|t| format!("w={t}")));
    if low_level {
        tokens.extend(tokenize(&step.subgoal).into_iter().map(|t| format!("sub={t}")));
    }
    tokens
}

/// Signed feature hashing of `tokens` into `dim` buckets, L2-normalized.
/// No tokens (or full cancellation) yields the unit vector `e₀`.
pub fn featurize_tokens<S: AsRef<str>>(tokens: &[S], dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for t in tokens {
        let h = fnv1a(t.as_ref().as_bytes());
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

pub fn featurize_step(episode: &Episode, step: &Step, dim: usize, low_level: bool) -> Vec<f64> {
    featurize_tokens(&step_tokens(episode, step, low_level), dim)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub action: usize,
    pub arg: usize,
}

pub fn step_example(episode: &Episode, step: &Step, shape: &ModelShape, low_level: bool) -> Example {
    Example {
        features: featurize_step(episode, step, shape.feature_dim, low_level),
        action: step.action_type.index(),
        arg: arg_slot(&step.action_args, shape.arg_slots),
    }
}

fn logits(params: &[f64], shape: &ModelShape, x: &[f64], out: &mut [f64]) {
    let d = shape.feature_dim;
    let bias = shape.n_classes() * d;
    for (c, o) in out.iter_mut().enumerate() {
        let row = &params[c * d..(c + 1) * d];
        *o = params[bias + c] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
    }
}

/// In-place softmax; returns the log-sum-exp of the input logits.
fn softmax(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
    let lse = max + sum.ln();
    z.iter_mut().for_each(|v| *v = (*v - lse).exp());
    lse
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy of both heads plus `(μ/2)‖w − w_global‖²`, with its exact
/// gradient. `correction` (SCAFFOLD's `c − cₖ`) is added to the gradient only.
pub fn loss_and_grad(
    params: &ParamVector,
    batch: &[Example],
    global: &ParamVector,
    mu: f64,
    correction: Option<&[f64]>,
    shape: &ModelShape,
) -> Result<(f64, Vec<f64>)> {
    let n = shape.n_params();
    check_dim(n, params.len())?;
    check_dim(n, global.len())?;
    if let Some(c) = correction {
        check_dim(n, c.len())?;
    }
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let d = shape.feature_dim;
    let k = shape.n_classes();
    let bias = k * d;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; n];
    let mut z = vec![0.0; k];
    let mut loss = 0.0;
    for ex in batch {
        check_dim(d, ex.features.len())?;
        logits(&params.values, shape, &ex.features, &mut z);
        let (za, zv) = z.split_at_mut(N_ACTIONS);
        let ln_pa = za[ex.action] - softmax(za);
        let ln_pv = zv[ex.arg] - softmax(zv);
        loss -= ln_pa + ln_pv;
        z[ex.action] -= 1.0;
        z[N_ACTIONS + ex.arg] -= 1.0;
        for (c, &g) in z.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let g = g * scale;
            let row = &mut grad[c * d..(c + 1) * d];
            row.iter_mut().zip(&ex.features).for_each(|(r, x)| *r += g * x);
            grad[bias + c] += g;
        }
    }
    loss *= scale;
    if mu != 0.0 {
        let mut sq = 0.0;
        for ((g, w), w0) in grad.iter_mut().zip(&params.values).zip(&global.values) {
            let diff = w - w0;
            sq += diff * diff;
            *g += mu * diff;
        }
        loss += 0.5 * mu * sq;
    }
    if let Some(c) = correction {
        grad.iter_mut().zip(c).for_each(|(g, ci)| *g += ci);
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub prox_mu: f64,
    pub subsample_fraction: f64,
    pub seed: u64,
    pub low_level: bool,
    pub shape: ModelShape,
}

impl Default for LocalTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2.0,
            epochs: 2,
            batch_size: 4,
            prox_mu: 0.0,
            subsample_fraction: 0.1,
            seed: 0,
            low_level: false,
            shape: ModelShape::default(),
        }
    }
}

impl LocalTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return bad(format!("subsample_fraction must lie in (0, 1], got {}", self.subsample_fraction));
        }
        if !(self.prox_mu >= 0.0 && self.prox_mu.is_finite()) {
            return bad(format!("prox_mu must be nonnegative, got {}", self.prox_mu));
        }
        ModelShape::new(self.shape.feature_dim, self.shape.arg_slots)?;
        Ok(())
    }

    /// `⌈f·E⌉`, at least 1 and at most `E`.
    pub fn subsample_size(&self, n_episodes: usize) -> usize {
        let k = (self.subsample_fraction * n_episodes as f64 - 1e-9).ceil() as usize;
        k.clamp(1, n_episodes.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalUpdate {
    pub new_params: ParamVector,
    /// `Sₖ`: steps in the trained subsample.
    pub n_steps_trained: usize,
    /// `Eₖ`: episodes in the trained subsample.
    pub n_episodes_trained: usize,
    /// Mean minibatch loss over all SGD steps (loss at the start if none ran).
    pub mean_loss: f64,
    pub n_sgd_steps: usize,
}

/// Runs `epochs` passes of mini-batch SGD over the steps of a seeded episode
/// subsample, starting from `params`.
pub fn local_train(
    params: &ParamVector,
    client_episodes: &[Episode],
    cfg: &LocalTrainConfig,
    global: &ParamVector,
    correction: Option<&[f64]>,
) -> Result<LocalUpdate> {
    cfg.validate()?;
    let shape = cfg.shape;
    check_dim(shape.n_params(), params.len())?;
    check_dim(shape.n_params(), global.len())?;
    if client_episodes.is_empty() {
        return Err(ModelError::EmptyClient);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.subsample_size(client_episodes.len());
    let mut chosen = index::sample(&mut rng, client_episodes.len(), k).into_vec();
    chosen.sort_unstable();
    let examples: Vec<Example> = chosen
        .iter()
        .flat_map(|&i| {
            let e = &client_episodes[i];
            e.steps.iter().map(move |s| step_example(e, s, &shape, cfg.low_level))
        })
        .collect();

    let mut w = params.clone();
    let mut losses = Vec::new();
    if !examples.is_empty() {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
                let (loss, grad) = loss_and_grad(&w, &batch, global, cfg.prox_mu, correction, &shape)?;
                losses.push(loss);
                w.values
                    .iter_mut()
                    .zip(&grad)
                    .for_each(|(p, g)| *p -= cfg.learning_rate * g);
            }
        }
    }
    let mean_loss = if losses.is_empty() {
        if examples.is_empty() {
            0.0
        } else {
            loss_and_grad(&w, &examples, global, cfg.prox_mu, None, &shape)?.0
        }
    } else {
        losses.iter().sum::<f64>() / losses.len() as f64
    };
    Ok(LocalUpdate {
        new_params: w,
        n_steps_trained: examples.len(),
        n_episodes_trained: k,
        mean_loss,
        n_sgd_steps: losses.len(),
    })
}

/// Argmax of both heads, serialized like [`gold_response`]. Ties break to the
/// lowest index.
pub fn predict_response(params: &ParamVector, episode: &Episode, step: &Step, low_level: bool, shape: &ModelShape) -> String {
    let x = featurize_step(episode, step, shape.feature_dim, low_level);
    let mut z = vec![0.0; shape.n_classes()];
    logits(&params.values, shape, &x, &mut z);
    let (za, zv) = z.split_at(N_ACTIONS);
    let action = ActionType::from_index(argmax(za)).expect("action head is N_ACTIONS wide");
    response_text(action, argmax(zv))
}

/// Frequency of each argument slot in a dataset; handy for inspecting collisions.
pub fn arg_slot_histogram(dataset: &[Episode], shape: &ModelShape) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for s in dataset.iter().flat_map(|e| &e.steps) {
        *out.entry(arg_slot(&s.action_args, shape.arg_slots)).or_insert(0) += 1;
    }
    out
}
