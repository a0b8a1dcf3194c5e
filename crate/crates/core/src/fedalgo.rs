//! Server-side aggregation and update rules.
//!
//! FedAvg and FedProx share [`aggregate_weighted`] with step-count weights.
//! FedMobileAgent only changes the weights. FedAvgM interpolates the previous
//! global model with the aggregate. The adaptive family treats
//! `aggregate − global` as a pseudo-gradient. SCAFFOLD keeps control variates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LocalUpdate, ParamVector};

#[derive(Debug, Error, PartialEq)]
pub enum FedError {
    #[error("NoUpdates: nothing to aggregate")]
    NoUpdates,
    #[error("ZeroTotalWeight: all aggregation weights are zero")]
    ZeroTotalWeight,
    #[error("DimensionMismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("UnknownClient: {0} has no control variate")]
    UnknownClient(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = FedError> = std::result::Result<T, E>;

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(FedError::DimensionMismatch { expected, got })
    }
}

/// `Σ wₖ·pₖ / Σ wₖ`, accumulated as a running mean so identical inputs are
/// reproduced exactly. Zero-weight updates are skipped.
pub fn aggregate_weighted(updates: &[(&ParamVector, f64)]) -> Result<ParamVector> {
    let (first, _) = updates.first().ok_or(FedError::NoUpdates)?;
    let dim = first.len();
    for (p, w) in updates {
        check_dim(dim, p.len())?;
        if !(*w >= 0.0 && w.is_finite()) {
            return Err(FedError::InvalidConfig(format!("aggregation weight {w} is not a nonnegative number")));
        }
    }
    let mut acc: Option<Vec<f64>> = None;
    let mut total = 0.0;
    for (p, w) in updates.iter().filter(|(_, w)| *w > 0.0) {
        total += w;
        match acc.as_mut() {
            None => acc = Some(p.values.clone()),
            Some(a) => {
                let r = w / total;
                a.iter_mut().zip(&p.values).for_each(|(x, y)| *x += r * (y - *x));
            }
        }
    }
    acc.map(ParamVector::from).ok_or(FedError::ZeroTotalWeight)
}

/// Raw FedAvg weights: steps trained this round.
pub fn fedavg_weights(updates: &[LocalUpdate]) -> Vec<f64> {
    updates.iter().map(|u| u.n_steps_trained as f64).collect()
}

pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(FedError::NoUpdates);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(FedError::ZeroTotalWeight);
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FedMobileAgentConfig {
    pub lambda: f64,
}

impl Default for FedMobileAgentConfig {
    fn default() -> Self {
        Self { lambda: 7.0 }
    }
}

/// Normalized `Sₖ + λ·Eₖ`.
pub fn fedmobileagent_weights(updates: &[LocalUpdate], cfg: &FedMobileAgentConfig) -> Result<Vec<f64>> {
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(FedError::InvalidConfig(format!("lambda must be nonnegative, got {}", cfg.lambda)));
    }
    let raw: Vec<f64> = updates
        .iter()
        .map(|u| u.n_steps_trained as f64 + cfg.lambda * u.n_episodes_trained as f64)
        .collect();
    normalize_weights(&raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveServerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eta: f64,
    pub tau: f64,
}

impl Default for AdaptiveServerConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eta: 1e-3,
            tau: 1e-6,
        }
    }
}

impl AdaptiveServerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eta > 0.0
            && self.tau > 0.0;
        if ok {
            Ok(())
        } else {
            Err(FedError::InvalidConfig(format!("adaptive server config out of range: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaptiveKind {
    Adagrad,
    Adam,
    Yogi,
}

pub const FEDAVGM_HISTORY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaffoldState {
    pub eta_s: f64,
    /// Global control variate `c`.
    pub c: Vec<f64>,
    /// Per-client control variates `cₖ`.
    pub c_clients: Vec<Vec<f64>>,
}

impl ScaffoldState {
    pub fn new(eta_s: f64, dim: usize, n_clients: usize) -> Self {
        Self {
            eta_s,
            c: vec![0.0; dim],
            c_clients: vec![vec![0.0; dim]; n_clients],
        }
    }

    /// `c − cₖ`, the drift correction added to client `k`'s gradients.
    pub fn correction(&self, client: usize) -> Result<Vec<f64>> {
        let ck = self.c_clients.get(client).ok_or(FedError::UnknownClient(client))?;
        Ok(self.c.iter().zip(ck).map(|(c, k)| c - k).collect())
    }
}

/// Control-variate change for one client after local training (option II):
/// `cₖ⁺ − cₖ = −c + (x − y)/(K·lr)`, zero when no local steps ran.
pub fn scaffold_client_delta(
    c: &[f64],
    global: &ParamVector,
    local: &ParamVector,
    n_sgd_steps: usize,
    learning_rate: f64,
) -> Vec<f64> {
    if n_sgd_steps == 0 {
        return vec![0.0; c.len()];
    }
    let scale = 1.0 / (n_sgd_steps as f64 * learning_rate);
    c.iter()
        .zip(global.values.iter().zip(&local.values))
        .map(|(ci, (x, y))| -ci + (x - y) * scale)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub algorithm: String,
    pub round: usize,
    pub global_params: ParamVector,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub momentum_model: ParamVector,
    pub scaffold: Option<ScaffoldState>,
}

impl ServerState {
    /// Fresh state; `v` starts at `τ²`.
    pub fn new(algorithm: &str, params: ParamVector, tau: f64) -> Self {
        let n = params.len();
        Self {
            algorithm: algorithm.to_string(),
            round: 0,
            m: vec![0.0; n],
            v: vec![tau * tau; n],
            momentum_model: params.clone(),
            global_params: params,
            scaffold: None,
        }
    }

    pub fn with_scaffold(mut self, eta_s: f64, n_clients: usize) -> Self {
        self.scaffold = Some(ScaffoldState::new(eta_s, self.global_params.len(), n_clients));
        self
    }
}

/// New global `h·previous + (1−h)·aggregated`.
pub fn fedavgm_update(state: &ServerState, aggregated: &ParamVector, h: f64) -> Result<ServerState> {
    check_dim(state.global_params.len(), aggregated.len())?;
    if !(0.0..=1.0).contains(&h) {
        return Err(FedError::InvalidConfig(format!("interpolation ratio {h} outside [0, 1]")));
    }
    let mut next = state.clone();
    next.global_params
        .values
        .iter_mut()
        .zip(&aggregated.values)
        .for_each(|(g, a)| *g = h * *g + (1.0 - h) * a);
    next.momentum_model = next.global_params.clone();
    Ok(next)
}

/// One FedAdagrad / FedAdam / FedYogi server step with `Δ = aggregated − global`.
pub fn adaptive_update(
    state: &ServerState,
    kind: AdaptiveKind,
    aggregated: &ParamVector,
    cfg: &AdaptiveServerConfig,
) -> Result<ServerState> {
    cfg.validate()?;
    let n = state.global_params.len();
    check_dim(n, aggregated.len())?;
    check_dim(n, state.m.len())?;
    check_dim(n, state.v.len())?;
    let mut next = state.clone();
    for i in 0..n {
        let delta = aggregated.values[i] - state.global_params.values[i];
        let d2 = delta * delta;
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * delta;
        let v0 = state.v[i];
        let v = match kind {
            AdaptiveKind::Adagrad => v0 + d2,
            AdaptiveKind::Adam => cfg.beta2 * v0 + (1.0 - cfg.beta2) * d2,
            AdaptiveKind::Yogi => v0 - (1.0 - cfg.beta2) * d2 * sign(v0 - d2),
        };
        next.m[i] = m;
        next.v[i] = v;
        // Yogi's sign rule keeps v ≥ 0 in exact arithmetic; clamp rounding noise
        next.global_params.values[i] += cfg.eta * m / (v.max(0.0).sqrt() + cfg.tau);
    }
    Ok(next)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaffoldUpdate {
    pub client: usize,
    pub params: ParamVector,
    pub c_delta: Vec<f64>,
}

/// `global += η_s·mean(pₖ − global)`, `cₖ += Δcₖ`, `c += (|S|/N)·mean(Δcₖ)`.
pub fn scaffold_round(state: &ServerState, updates: &[ScaffoldUpdate]) -> Result<ServerState> {
    let sc = state
        .scaffold
        .as_ref()
        .ok_or_else(|| FedError::InvalidConfig("state carries no control variates".into()))?;
    if updates.is_empty() {
        return Err(FedError::NoUpdates);
    }
    let n = state.global_params.len();
    for u in updates {
        check_dim(n, u.params.len())?;
        check_dim(n, u.c_delta.len())?;
        if u.client >= sc.c_clients.len() {
            return Err(FedError::UnknownClient(u.client));
        }
    }
    let s = updates.len() as f64;
    let big_n = sc.c_clients.len() as f64;
    let mut next = state.clone();
    let nsc = next.scaffold.as_mut().expect("checked above");
    let uniform: Vec<(&ParamVector, f64)> = updates.iter().map(|u| (&u.params, 1.0)).collect();
    let mean = aggregate_weighted(&uniform)?;
    for i in 0..n {
        let g = state.global_params.values[i];
        next.global_params.values[i] = g + sc.eta_s * (mean.values[i] - g);
        let mean_dc = updates.iter().map(|u| u.c_delta[i]).sum::<f64>() / s;
        nsc.c[i] += (s / big_n) * mean_dc;
    }
    for u in updates {
        nsc.c_clients[u.client]
            .iter_mut()
            .zip(&u.c_delta)
            .for_each(|(c, d)| *c += d);
    }
    Ok(next)
}
