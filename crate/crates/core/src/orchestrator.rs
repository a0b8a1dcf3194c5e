//! Round loop: sample clients, train locally in parallel, aggregate.
//!
//! Every random choice is keyed on `(seed, round, client)` through
//! [`derive_seed`], so results do not depend on thread count or scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Category, Episode};
use crate::eval::{evaluate, EvalError, EvalReport, GroupAccuracy, DEFAULT_THRESHOLD};
use crate::fedalgo::{
    adaptive_update, aggregate_weighted, fedavg_weights, fedavgm_update, fedmobileagent_weights, scaffold_client_delta,
    scaffold_round, AdaptiveKind, AdaptiveServerConfig, FedError, FedMobileAgentConfig, ScaffoldUpdate, ServerState,
    FEDAVGM_HISTORY,
};
use crate::hashing::derive_seed;
use crate::model::{local_train, LocalTrainConfig, LocalUpdate, ModelError, ParamVector};
use crate::partition::PartitionAssignment;

const SAMPLE_KEY: u64 = 0x5a;
const TRAIN_KEY: u64 = 0x7a;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("NoEligibleClients: {0}")]
    NoEligibleClients(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fed(#[from] FedError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T, E = OrchestratorError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Algorithm {
    ZeroShot,
    Central,
    LocalK,
    FedAvg,
    FedProx,
    FedAvgM,
    FedAdagrad,
    FedAdam,
    FedYogi,
    Scaffold,
    FedMobileAgent,
}

impl Algorithm {
    pub const ALL: [Algorithm; 11] = [
        Algorithm::ZeroShot,
        Algorithm::Central,
        Algorithm::LocalK,
        Algorithm::FedAvg,
        Algorithm::FedProx,
        Algorithm::FedAvgM,
        Algorithm::FedAdagrad,
        Algorithm::FedAdam,
        Algorithm::FedYogi,
        Algorithm::Scaffold,
        Algorithm::FedMobileAgent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::ZeroShot => "zero_shot",
            Algorithm::Central => "central",
            Algorithm::LocalK => "local_k",
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedProx => "fedprox",
            Algorithm::FedAvgM => "fedavgm",
            Algorithm::FedAdagrad => "fedadagrad",
            Algorithm::FedAdam => "fedadam",
            Algorithm::FedYogi => "fedyogi",
            Algorithm::Scaffold => "scaffold",
            Algorithm::FedMobileAgent => "fedmobileagent",
        }
    }

    pub fn is_federated(self) -> bool {
        !matches!(self, Algorithm::ZeroShot | Algorithm::Central | Algorithm::LocalK)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.as_str().to_string()
    }
}

impl TryFrom<String> for Algorithm {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_lowercase().replace('-', "_");
        Algorithm::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == norm)
            .ok_or_else(|| {
                let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.as_str()).collect();
                format!("unknown algorithm `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub rounds: usize,
    pub clients_per_round: usize,
    /// Shared local trainer settings; `local.seed` is ignored in favour of
    /// seeds derived from `seed`, and `local.prox_mu` from `prox_mu`.
    pub local: LocalTrainConfig,
    /// Proximal coefficient, applied only by FedProx.
    pub prox_mu: f64,
    pub adaptive: AdaptiveServerConfig,
    pub fedavgm_history: f64,
    pub scaffold_eta_s: f64,
    pub fedmobileagent: FedMobileAgentConfig,
    pub seed: u64,
    pub local_k_index: Option<usize>,
    pub threshold: f64,
    pub eval_every_round: bool,
    /// Worker threads for local training; results do not depend on it.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::FedAvg,
            rounds: 10,
            clients_per_round: 3,
            local: LocalTrainConfig::default(),
            prox_mu: 0.2,
            adaptive: AdaptiveServerConfig::default(),
            fedavgm_history: FEDAVGM_HISTORY,
            scaffold_eta_s: 1.0,
            fedmobileagent: FedMobileAgentConfig::default(),
            seed: 0,
            local_k_index: None,
            threshold: DEFAULT_THRESHOLD,
            eval_every_round: false,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, n_clients: usize) -> Result<()> {
        let bad = |m: String| Err(OrchestratorError::InvalidConfig(m));
        self.local.validate()?;
        self.adaptive.validate()?;
        if self.algorithm != Algorithm::ZeroShot && self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        if self.algorithm.is_federated() && self.clients_per_round > n_clients {
            return bad(format!(
                "clients_per_round {} exceeds {n_clients} clients",
                self.clients_per_round
            ));
        }
        if self.algorithm == Algorithm::LocalK {
            match self.local_k_index {
                Some(k) if k < n_clients => {}
                Some(k) => return bad(format!("local_k_index {k} out of range for {n_clients} clients")),
                None => return bad("local_k needs local_k_index".into()),
            }
        }
        if !(0.0..=1.0).contains(&self.fedavgm_history) {
            return bad(format!("fedavgm_history {} outside [0, 1]", self.fedavgm_history));
        }
        if self.prox_mu.is_nan() || self.prox_mu < 0.0 {
            return bad(format!("prox_mu must be nonnegative, got {}", self.prox_mu));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    fn local_for(&self, round: usize, client: usize) -> LocalTrainConfig {
        LocalTrainConfig {
            seed: derive_seed(self.seed, &[TRAIN_KEY, round as u64, client as u64]),
            prox_mu: if self.algorithm == Algorithm::FedProx { self.prox_mu } else { 0.0 },
            ..self.local
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub step_accuracy: f64,
    pub episode_accuracy: f64,
    pub n_steps: usize,
    pub n_episodes: usize,
    pub by_app: BTreeMap<String, GroupAccuracy>,
    pub by_category: BTreeMap<Category, GroupAccuracy>,
}

impl From<&EvalReport> for EvalSummary {
    fn from(r: &EvalReport) -> Self {
        Self {
            step_accuracy: r.step_accuracy,
            episode_accuracy: r.episode_accuracy,
            n_steps: r.n_steps,
            n_episodes: r.n_episodes,
            by_app: r.by_app.clone(),
            by_category: r.by_category.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub sampled_clients: Vec<usize>,
    pub mean_local_loss: f64,
    /// Σ Sₖ over sampled clients.
    pub steps_trained: usize,
    /// Σ Eₖ over sampled clients.
    pub episodes_trained: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eval: Option<EvalSummary>,
}

/// Sorted client indices for `round`, drawn without replacement from the
/// clients that hold data.
pub fn sample_clients(clients: &[Vec<Episode>], k: usize, seed: u64, round: usize) -> Result<Vec<usize>> {
    let eligible: Vec<usize> = (0..clients.len()).filter(|&c| !clients[c].is_empty()).collect();
    if k == 0 {
        return Err(OrchestratorError::NoEligibleClients("clients_per_round is 0".into()));
    }
    if eligible.len() < k {
        return Err(OrchestratorError::NoEligibleClients(format!(
            "{k} clients requested but only {} hold data",
            eligible.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[SAMPLE_KEY, round as u64]));
    let mut picked: Vec<usize> = index::sample(&mut rng, eligible.len(), k)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

fn train_clients(
    state: &ServerState,
    clients: &[(usize, &[Episode])],
    cfg: &ExperimentConfig,
    round: usize,
) -> Result<Vec<LocalUpdate>> {
    let global = &state.global_params;
    clients
        .par_iter()
        .map(|&(c, episodes)| {
            let correction = match &state.scaffold {
                Some(sc) => Some(sc.correction(c)?),
                None => None,
            };
            Ok(local_train(global, episodes, &cfg.local_for(round, c), global, correction.as_deref())?)
        })
        .collect()
}

fn metrics_for(round: usize, sampled: Vec<usize>, updates: &[LocalUpdate]) -> RoundMetrics {
    RoundMetrics {
        round,
        sampled_clients: sampled,
        mean_local_loss: updates.iter().map(|u| u.mean_loss).sum::<f64>() / updates.len() as f64,
        steps_trained: updates.iter().map(|u| u.n_steps_trained).sum(),
        episodes_trained: updates.iter().map(|u| u.n_episodes_trained).sum(),
        eval: None,
    }
}

/// One broadcast → local training → aggregation cycle for a federated algorithm.
pub fn run_round(
    state: &ServerState,
    clients: &[Vec<Episode>],
    cfg: &ExperimentConfig,
    round: usize,
) -> Result<(ServerState, RoundMetrics)> {
    let sampled = sample_clients(clients, cfg.clients_per_round, cfg.seed, round)?;
    let jobs: Vec<(usize, &[Episode])> = sampled.iter().map(|&c| (c, clients[c].as_slice())).collect();
    let updates = train_clients(state, &jobs, cfg, round)?;
    let mut next = aggregate(state, &sampled, &updates, cfg)?;
    next.round = round + 1;
    Ok((next, metrics_for(round, sampled, &updates)))
}

fn aggregate(
    state: &ServerState,
    sampled: &[usize],
    updates: &[LocalUpdate],
    cfg: &ExperimentConfig,
) -> Result<ServerState> {
    let weighted = |w: Vec<f64>| -> Result<ParamVector> {
        let pairs: Vec<(&ParamVector, f64)> = updates.iter().map(|u| &u.new_params).zip(w).collect();
        Ok(aggregate_weighted(&pairs)?)
    };
    let mut next = state.clone();
    match cfg.algorithm {
        Algorithm::FedAvg | Algorithm::FedProx => {
            next.global_params = weighted(fedavg_weights(updates))?;
        }
        Algorithm::FedMobileAgent => {
            next.global_params = weighted(fedmobileagent_weights(updates, &cfg.fedmobileagent)?)?;
        }
        Algorithm::FedAvgM => {
            next = fedavgm_update(state, &weighted(fedavg_weights(updates))?, cfg.fedavgm_history)?;
        }
        Algorithm::FedAdagrad | Algorithm::FedAdam | Algorithm::FedYogi => {
            let kind = match cfg.algorithm {
                Algorithm::FedAdagrad => AdaptiveKind::Adagrad,
                Algorithm::FedAdam => AdaptiveKind::Adam,
                _ => AdaptiveKind::Yogi,
            };
            next = adaptive_update(state, kind, &weighted(fedavg_weights(updates))?, &cfg.adaptive)?;
        }
        Algorithm::Scaffold => {
            let sc = state
                .scaffold
                .as_ref()
                .ok_or_else(|| OrchestratorError::InvalidConfig("scaffold state missing".into()))?;
            let ups: Vec<ScaffoldUpdate> = sampled
                .iter()
                .zip(updates)
                .map(|(&client, u)| ScaffoldUpdate {
                    client,
                    params: u.new_params.clone(),
                    c_delta: scaffold_client_delta(
                        &sc.c,
                        &state.global_params,
                        &u.new_params,
                        u.n_sgd_steps,
                        cfg.local.learning_rate,
                    ),
                })
                .collect();
            next = scaffold_round(state, &ups)?;
        }
        Algorithm::ZeroShot | Algorithm::Central | Algorithm::LocalK => {
            return Err(OrchestratorError::InvalidConfig(format!(
                "{} is not a federated algorithm",
                cfg.algorithm
            )));
        }
    }
    Ok(next)
}

/// Initial server state for `cfg` over `n_clients` clients.
pub fn initial_state(cfg: &ExperimentConfig, n_clients: usize) -> ServerState {
    let params = ParamVector::for_shape(&cfg.local.shape);
    let state = ServerState::new(cfg.algorithm.as_str(), params, cfg.adaptive.tau);
    if cfg.algorithm == Algorithm::Scaffold {
        state.with_scaffold(cfg.scaffold_eta_s, n_clients)
    } else {
        state
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub state: ServerState,
    pub rounds: Vec<RoundMetrics>,
    pub final_eval: EvalReport,
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| OrchestratorError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs a baseline or federated experiment and evaluates the final model on
/// `test`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    dataset: &[Episode],
    assignment: &PartitionAssignment,
    test: &[Episode],
) -> Result<ExperimentResult> {
    let clients = assignment.client_datasets(dataset);
    cfg.validate(clients.len())?;
    with_pool(cfg.threads, || run_inner(cfg, dataset, &clients, test))?
}

fn run_inner(
    cfg: &ExperimentConfig,
    dataset: &[Episode],
    clients: &[Vec<Episode>],
    test: &[Episode],
) -> Result<ExperimentResult> {
    let shape = cfg.local.shape;
    let low = cfg.local.low_level;
    let mut state = initial_state(cfg, clients.len());
    let mut rounds = Vec::new();
    let single: Option<(usize, &[Episode])> = match cfg.algorithm {
        Algorithm::Central => Some((0, dataset)),
        Algorithm::LocalK => {
            let k = cfg.local_k_index.expect("validated");
            Some((k, clients[k].as_slice()))
        }
        _ => None,
    };
    if cfg.algorithm != Algorithm::ZeroShot {
        if let Some((_, eps)) = single {
            if eps.is_empty() {
                return Err(OrchestratorError::NoEligibleClients("the trained client holds no data".into()));
            }
        }
        for r in 0..cfg.rounds {
            let (next, mut m) = match single {
                Some((c, eps)) => {
                    let updates = train_clients(&state, &[(c, eps)], cfg, r)?;
                    let mut next = state.clone();
                    next.global_params = updates[0].new_params.clone();
                    next.momentum_model = next.global_params.clone();
                    next.round = r + 1;
                    (next, metrics_for(r, vec![c], &updates))
                }
                None => run_round(&state, clients, cfg, r)?,
            };
            if cfg.eval_every_round && r + 1 < cfg.rounds {
                let rep = evaluate(&next.global_params, test, low, cfg.threshold, &shape)?;
                m.eval = Some(EvalSummary::from(&rep));
            }
            state = next;
            rounds.push(m);
        }
    }
    let final_eval = evaluate(&state.global_params, test, low, cfg.threshold, &shape)?;
    if cfg.eval_every_round {
        if let Some(last) = rounds.last_mut() {
            last.eval = Some(EvalSummary::from(&final_eval));
        }
    }
    Ok(ExperimentResult {
        state,
        rounds,
        final_eval,
    })
}

#[derive(Serialize)]
struct RoundRecord<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(flatten)]
    metrics: &'a RoundMetrics,
}

#[derive(Serialize, Deserialize)]
pub struct SummaryRecord {
    #[serde(rename = "type")]
    pub kind: String,
    pub rounds: usize,
    pub final_eval: EvalSummary,
}

/// JSON lines: one `{"type":"round",...}` per round, then one
/// `{"type":"summary",...}`.
pub fn write_metrics<W: Write>(mut out: W, result: &ExperimentResult) -> std::io::Result<()> {
    for m in &result.rounds {
        serde_json::to_writer(&mut out, &RoundRecord { kind: "round", metrics: m })?;
        out.write_all(b"\n")?;
    }
    let summary = SummaryRecord {
        kind: "summary".into(),
        rounds: result.rounds.len(),
        final_eval: EvalSummary::from(&result.final_eval),
    };
    serde_json::to_writer(&mut out, &summary)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// The summary record of a metrics file.
pub fn read_summary(text: &str) -> Option<SummaryRecord> {
    text.lines()
        .rev()
        .filter_map(|l| serde_json::from_str::<SummaryRecord>(l).ok())
        .find(|s| s.kind == "summary")
}
