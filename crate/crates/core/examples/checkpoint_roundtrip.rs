//! Trains SCAFFOLD for a few rounds, checkpoints the server state, resumes
//! from the file and checks that the resumed run matches an uninterrupted one.
//!
//! ```text
//! cargo run --release --example checkpoint_roundtrip
//! ```

use fedsim::checkpoint::{load_state, save_state};
use fedsim::orchestrator::{initial_state, run_round, Algorithm, ExperimentConfig};
use fedsim::partition::{partition, PartitionScheme};
use fedsim::synth::DatasetPreset;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = DatasetPreset::AppLevel.build(2)?;
    let assignment = partition(&data.train, &PartitionScheme::parse("app-level/half-skew", 5, 2)?)?;
    let clients = assignment.client_datasets(&data.train);
    let cfg = ExperimentConfig { algorithm: Algorithm::Scaffold, seed: 2, ..Default::default() };

    let mut straight = initial_state(&cfg, clients.len());
    for r in 0..6 {
        straight = run_round(&straight, &clients, &cfg, r)?.0;
    }

    let mut state = initial_state(&cfg, clients.len());
    for r in 0..3 {
        state = run_round(&state, &clients, &cfg, r)?.0;
    }
    let path = std::env::temp_dir().join("fedsim-scaffold.ckpt");
    save_state(&state, &path)?;
    let size = std::fs::metadata(&path)?.len();
    let mut resumed = load_state(&path)?;
    assert_eq!(resumed, state);
    for r in resumed.round..6 {
        resumed = run_round(&resumed, &clients, &cfg, r)?.0;
    }

    println!("checkpoint {} ({size} bytes) at round {}", path.display(), state.round);
    println!("resumed == uninterrupted: {}", resumed == straight);
    println!("distance {:.3e}", resumed.global_params.l2_distance(&straight.global_params));
    Ok(())
}
