//! Command-line front end for the `fedsim` binary.
//!
//! Exit codes: 0 success, 2 configuration error, 3 scheme or verification
//! failure, 4 I/O or input-format error.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, CheckpointError};
use crate::data::{self, AppCatalog, DataError};
use crate::eval::{self, EvalError, DEFAULT_THRESHOLD};
use crate::fedalgo::FedError;
use crate::model::{ModelError, ModelShape};
use crate::orchestrator::{self, Algorithm, ExperimentConfig, OrchestratorError};
use crate::partition::{self, Axis, PartitionAssignment, PartitionError, PartitionScheme};
use crate::report::{self, ReportError, RunManifest};
use crate::synth::{generate_synthetic_dataset, DatasetPreset, SyntheticSpec};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Scheme(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Scheme(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Scheme(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<PartitionError> for CliError {
    fn from(e: PartitionError) -> Self {
        match e {
            PartitionError::InvalidScheme(_) => CliError::Config(e.to_string()),
            PartitionError::Io(_) | PartitionError::Csv(_) | PartitionError::Parse { .. } => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Scheme(e.to_string()),
        }
    }
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::Eval(EvalError::Io(_)) => CliError::Io(e.to_string()),
            OrchestratorError::Model(ModelError::DimensionMismatch { .. })
            | OrchestratorError::Fed(FedError::DimensionMismatch { .. }) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::EmptyTestSet | EvalError::EmptyCorpus | EvalError::PredictionCount { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::MissingMetrics(_) => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn io_ctx<T>(r: std::io::Result<T>, what: &Path) -> Result<T> {
    r.map_err(|e| CliError::Io(format!("{}: {e}", what.display())))
}

#[derive(Debug, Parser)]
#[command(name = "fedsim", version, about = "Federated-learning simulator for episode-structured agent data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (preset or custom profile).
    GenData(GenDataArgs),
    /// Normalize raw episode records (open_app / goal-regex app extraction).
    Ingest(IngestArgs),
    /// Print dataset statistics as JSON.
    Stats(StatsArgs),
    /// Assign episodes to clients under a heterogeneity scheme and verify it.
    Partition(PartitionArgs),
    /// Run a baseline or federated experiment.
    Train(Box<TrainArgs>),
    /// Evaluate a checkpoint on a test set.
    Evaluate(EvaluateArgs),
    /// Tabulate per-label step accuracy across metrics files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Dataset preset: basic-ac-{200,500,1000,3000,5000,7000}, step-episode,
    /// category-level, app-level, scaleapp.
    #[arg(long)]
    pub preset: Option<String>,
    /// Training episodes (custom profile, or override a basic-ac preset size).
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Custom app profile `App:weight,App:weight`; defaults to the catalog, uniform.
    #[arg(long)]
    pub apps: Option<String>,
    /// Mean steps per episode for a custom profile.
    #[arg(long, default_value_t = 6.7)]
    pub mean_steps: f64,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset (training split for presets).
    #[arg(long)]
    pub out: PathBuf,
    /// Test split output (presets only).
    #[arg(long)]
    pub test_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw records, one JSON object per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Normalized dataset output.
    #[arg(long)]
    pub out: PathBuf,
    /// Extra `app<TAB>category` catalog layered over the built-in one.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Dataset to summarize.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    /// Dataset to partition.
    #[arg(long)]
    pub data: PathBuf,
    /// `family/variant`, e.g. `category-level/half-skew`.
    #[arg(long)]
    pub scheme: String,
    /// Number of clients.
    #[arg(long)]
    pub clients: usize,
    /// Partition seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Assignment file output (episode id, client).
    #[arg(long)]
    pub out: PathBuf,
    /// Heatmap CSV (client × label episode counts).
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
    /// Heatmap axis: app or category.
    #[arg(long, default_value = "app")]
    pub axis: String,
}

/// Train settings. Every field may also come from `--config` (TOML with the
/// same snake_case keys); explicit flags win.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    /// zero_shot, central, local_k, fedavg, fedprox, fedavgm, fedadagrad,
    /// fedadam, fedyogi, scaffold, fedmobileagent.
    #[arg(long)]
    pub algorithm: Option<String>,
    /// Communication rounds (default 10).
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Clients sampled each round (default 3).
    #[arg(long)]
    pub clients_per_round: Option<usize>,
    /// Seed for client sampling, subsampling and minibatch order (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// FedProx proximal coefficient μ (default 0.2).
    #[arg(long)]
    pub mu: Option<f64>,
    /// FedMobileAgent episode weight λ (default 7).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Local SGD learning rate (default 2.0).
    #[arg(long)]
    pub lr: Option<f64>,
    /// Local passes over the round's subsample (default 2).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Local minibatch size in steps (default 4).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Fraction of each client's episodes trained per round (default 0.1).
    #[arg(long)]
    pub subsample: Option<f64>,
    /// Train and evaluate with per-step subgoals.
    #[arg(long)]
    pub low_level: Option<bool>,
    /// Client trained by local_k (default 0).
    #[arg(long)]
    pub local_k: Option<usize>,
    /// Adaptive server learning rate η (default 1e-3).
    #[arg(long)]
    pub eta: Option<f64>,
    /// First-moment decay for the adaptive servers (default 0.9).
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Second-moment decay for the adaptive servers (default 0.999).
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Adaptive-server stabilizer τ; also the initial second moment is τ² (default 1e-6).
    #[arg(long)]
    pub tau: Option<f64>,
    /// FedAvgM weight on the previous global model (default 0.9).
    #[arg(long)]
    pub history: Option<f64>,
    /// SCAFFOLD server learning rate (default 1).
    #[arg(long)]
    pub eta_s: Option<f64>,
    /// TF-IDF similarity a step needs to count as correct (default 0.5).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Evaluate on the test set after every round, not only at the end.
    #[arg(long)]
    pub eval_every_round: Option<bool>,
}

impl TrainSettings {
    /// `self` over `base`, field by field.
    fn over(self, base: TrainSettings) -> TrainSettings {
        macro_rules! pick {
            ($($f:ident),*) => { TrainSettings { $($f: self.$f.or(base.$f)),* } };
        }
        pick!(
            algorithm, rounds, clients_per_round, seed, mu, lambda, lr, epochs, batch_size, subsample, low_level,
            local_k, eta, beta1, beta2, tau, history, eta_s, threshold, eval_every_round
        )
    }

    fn to_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(a) = &self.algorithm {
            cfg.algorithm = a.parse().map_err(CliError::Config)?;
        }
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$src { cfg.$($dst).+ = v; })*
            };
        }
        set!(
            rounds => rounds,
            clients_per_round => clients_per_round,
            seed => seed,
            mu => prox_mu,
            lambda => fedmobileagent.lambda,
            lr => local.learning_rate,
            epochs => local.epochs,
            batch_size => local.batch_size,
            subsample => local.subsample_fraction,
            low_level => local.low_level,
            eta => adaptive.eta,
            beta1 => adaptive.beta1,
            beta2 => adaptive.beta2,
            tau => adaptive.tau,
            history => fedavgm_history,
            eta_s => scaffold_eta_s,
            threshold => threshold,
            eval_every_round => eval_every_round,
        );
        cfg.local_k_index = self.local_k;
        if cfg.algorithm == Algorithm::LocalK && cfg.local_k_index.is_none() {
            cfg.local_k_index = Some(0);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub settings: TrainSettings,
    /// TOML file with train settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Assignment file; without it every episode sits on one client.
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    /// Test dataset used for evaluation.
    #[arg(long)]
    pub test: PathBuf,
    /// Metrics output: one JSON record per round, then a summary record.
    #[arg(long)]
    pub metrics: PathBuf,
    /// Final server state checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Run manifest; defaults to `<metrics>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Worker threads for client training (results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Server-state checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Test dataset.
    #[arg(long)]
    pub test: PathBuf,
    /// Feed per-step subgoals to the model.
    #[arg(long)]
    pub low_level: bool,
    /// TF-IDF similarity a step needs to count as correct.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Per-step results CSV.
    #[arg(long)]
    pub steps_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics files; each becomes one row named after its file stem.
    pub metrics: Vec<PathBuf>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Column axis: app or category.
    #[arg(long, default_value = "app")]
    pub axis: String,
}

fn parse_axis(s: &str) -> Result<Axis> {
    s.parse().map_err(|e: PartitionError| CliError::Config(e.to_string()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(io_ctx(fs::File::create(path), path)?))
}

fn load_dataset(path: &Path) -> Result<Vec<data::Episode>> {
    data::load_dataset(path).map_err(|e| match e {
        DataError::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
        other => CliError::Io(format!("{}: {other}", path.display())),
    })
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    write_stdout(format!("{text}\n").as_bytes())
}

/// Writes to stdout; a reader that hangs up early is not an error.
fn write_stdout(bytes: &[u8]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(bytes).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn parse_profile(s: &str) -> Result<Vec<(String, f64)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (name, w) = p.rsplit_once(':').unwrap_or((p, "1"));
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("InvalidSpec: bad weight in `{p}`")))?;
            Ok((name.trim().to_string(), w))
        })
        .collect()
}

fn cmd_gen_data(a: GenDataArgs) -> Result<()> {
    let (train, test) = match &a.preset {
        Some(name) => {
            let preset: DatasetPreset = name.parse().map_err(|e: DataError| CliError::Config(e.to_string()))?;
            if a.episodes == Some(0) {
                return Err(CliError::Config("InvalidSpec: n_episodes must be at least 1".into()));
            }
            let d = preset.build_with(a.seed, a.episodes)?;
            (d.train, Some(d.test))
        }
        None => {
            let n = a
                .episodes
                .ok_or_else(|| CliError::Config("InvalidSpec: give --preset or --episodes".into()))?;
            let profile = match &a.apps {
                Some(s) => parse_profile(s)?,
                None => AppCatalog::builtin().iter().map(|(app, _)| (app.to_string(), 1.0)).collect(),
            };
            let spec = SyntheticSpec::new(n, profile, a.mean_steps, a.seed);
            (generate_synthetic_dataset(&spec)?, None)
        }
    };
    io_ctx(data::write_dataset(create(&a.out)?, &train).map_err(std::io::Error::other), &a.out)?;
    if let (Some(path), Some(test)) = (&a.test_out, &test) {
        io_ctx(data::write_dataset(create(path)?, test).map_err(std::io::Error::other), path)?;
    }
    print_json(&data::dataset_stats(&train))
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let catalog = match &a.catalog {
        Some(p) => AppCatalog::builtin().with_overlay(&AppCatalog::load(p)?),
        None => AppCatalog::builtin().clone(),
    };
    let input = BufReader::new(io_ctx(fs::File::open(&a.input), &a.input)?);
    let ingested = data::ingest_records(input, &catalog)?;
    io_ctx(
        data::write_dataset(create(&a.out)?, &ingested.episodes).map_err(std::io::Error::other),
        &a.out,
    )?;
    eprintln!(
        "ingested {} episodes, skipped {} without an app name",
        ingested.episodes.len(),
        ingested.skipped_no_app.len()
    );
    print_json(&data::dataset_stats(&ingested.episodes))
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    print_json(&data::dataset_stats(&load_dataset(&a.data)?))
}

fn cmd_partition(a: PartitionArgs) -> Result<()> {
    let axis = parse_axis(&a.axis)?;
    let scheme = PartitionScheme::parse(&a.scheme, a.clients, a.seed)?;
    let dataset = load_dataset(&a.data)?;
    let assignment = partition::partition(&dataset, &scheme)?;
    let report = partition::verify_partition(&dataset, &assignment)?;
    let mut out = create(&a.out)?;
    assignment.write(&mut out)?;
    if let Some(path) = &a.heatmap {
        partition::distribution_matrix(&dataset, &assignment, axis).write_csv(create(path)?)?;
    }
    print_json(&report)?;
    if !report.ok {
        let rules: Vec<String> = report
            .violations
            .iter()
            .map(|v| match v.client {
                Some(c) => format!("{} (client {c})", v.rule),
                None => v.rule.clone(),
            })
            .collect();
        return Err(CliError::Scheme(format!("verification failed: {}", rules.join(", "))));
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let file_settings = match &a.config {
        Some(p) => {
            let text = io_ctx(fs::read_to_string(p), p)?;
            toml::from_str::<TrainSettings>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => TrainSettings::default(),
    };
    let settings = a.settings.clone().over(file_settings);
    let mut cfg = settings.to_config()?;
    cfg.threads = a.threads;

    let mut manifest = RunManifest::new(
        "train",
        cfg.seed,
        serde_json::to_value(&cfg).map_err(|e| CliError::Io(e.to_string()))?,
    );
    let mut inputs = vec![a.data.clone(), a.test.clone()];
    inputs.extend(a.assignment.clone());
    inputs.extend(a.config.clone());
    for p in &inputs {
        io_ctx(manifest.add_input(p), p)?;
    }

    let dataset = load_dataset(&a.data)?;
    let test = load_dataset(&a.test)?;
    let assignment = match &a.assignment {
        Some(p) => {
            let f = BufReader::new(io_ctx(fs::File::open(p), p)?);
            let assignment = PartitionAssignment::read(f)?;
            let check = partition::verify_partition(&dataset, &assignment)?;
            if !check.ok {
                return Err(CliError::Scheme(format!(
                    "assignment fails verification: {:?}",
                    check.violations.iter().map(|v| &v.rule).collect::<Vec<_>>()
                )));
            }
            assignment
        }
        None => partition::partition(&dataset, &PartitionScheme::parse("basic-iid", 1, 0)?)?,
    };
    let result = orchestrator::run_experiment(&cfg, &dataset, &assignment, &test)?;

    let mut buf = Vec::new();
    orchestrator::write_metrics(&mut buf, &result)?;
    io_ctx(report::write_atomic(&a.metrics, &buf), &a.metrics)?;
    manifest.outputs.push(a.metrics.display().to_string());
    if let Some(p) = &a.checkpoint {
        checkpoint::save_state(&result.state, p)?;
        manifest.outputs.push(p.display().to_string());
    }
    let manifest_path = a.manifest.clone().unwrap_or_else(|| {
        let mut s = a.metrics.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    });
    manifest.write_atomic(&manifest_path)?;
    eprintln!(
        "{}: step accuracy {:.4}, episode accuracy {:.4}",
        cfg.algorithm, result.final_eval.step_accuracy, result.final_eval.episode_accuracy
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let state = checkpoint::load_state(&a.checkpoint)?;
    let test = load_dataset(&a.test)?;
    let shape = shape_for(state.global_params.len())?;
    let report = eval::evaluate(&state.global_params, &test, a.low_level, a.threshold, &shape)?;
    if let Some(p) = &a.steps_csv {
        report.write_steps_csv(create(p)?)?;
    }
    print_json(&orchestrator::EvalSummary::from(&report))
}

/// Recovers the model shape from a parameter count, assuming the default
/// feature dimension.
fn shape_for(n_params: usize) -> Result<ModelShape> {
    let d = ModelShape::default().feature_dim;
    let classes = n_params / (d + 1);
    if classes * (d + 1) != n_params || classes <= crate::model::N_ACTIONS {
        return Err(CliError::Io(format!("checkpoint holds {n_params} parameters, not a d={d} model")));
    }
    Ok(ModelShape::new(d, classes - crate::model::N_ACTIONS)?)
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let axis = parse_axis(&a.axis)?;
    let runs = report::load_runs(&a.metrics)?;
    let table = report::build_table(&runs, axis)?;
    match &a.out {
        Some(p) => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            io_ctx(report::write_atomic(p, &buf), p)?;
        }
        None => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            write_stdout(&buf)?;
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Partition(a) => cmd_partition(a),
        Command::Train(a) => cmd_train(*a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
    }
}
