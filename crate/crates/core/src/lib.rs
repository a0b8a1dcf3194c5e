//! Federated-learning simulation for agents trained on episode-structured,
//! heterogeneous data.
//!
//! Episodes (an instruction plus a sequence of actions inside one app) are
//! synthesized or ingested, split across simulated clients by one of the
//! heterogeneity schemes, and trained with a small linear step predictor
//! under a baseline or federated algorithm. Results are scored with TF-IDF
//! gated step and episode accuracy.
//!
//! | module | role |
//! |---|---|
//! | [`data`] | episode schema, app catalog, ingestion, dataset I/O |
//! | [`synth`] | seeded synthetic generator and dataset presets |
//! | [`partition`] | client partition schemes and their verification |
//! | [`model`] | featurization, loss and gradient, local SGD |
//! | [`fedalgo`] | server aggregation and update rules |
//! | [`orchestrator`] | round loop, baselines, metrics records |
//! | [`eval`] | step and episode accuracy |
//! | [`checkpoint`] | binary parameter and server-state files |
//! | [`report`] | result tables and run manifests |
//! | [`cli`] | the `fedsim` binary |
//!
//! Runnable examples, one per capability:
//!
//! ```text
//! cargo run --example synthesize_dataset
//! cargo run --example partition_heatmaps
//! cargo run --example gradient_check
//! cargo run --example server_optimizers
//! cargo run --example evaluate_metrics
//! cargo run --release --example federated_run -- app-level/half-skew 3
//! cargo run --release --example heterogeneity_grid -- 5
//! cargo run --release --example checkpoint_roundtrip
//! ```

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod eval;
pub mod fedalgo;
pub mod hashing;
pub mod model;
pub mod orchestrator;
pub mod partition;
pub mod report;
pub mod synth;
