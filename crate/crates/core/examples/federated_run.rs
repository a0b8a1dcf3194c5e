//! Runs the baselines and every federated algorithm on the app-level preset
//! under one partition scheme and prints a per-app accuracy table.
//!
//! ```text
//! cargo run --release --example federated_run [scheme] [seed]
//! cargo run --release --example federated_run app-level/half-skew 3
//! ```

use fedsim::orchestrator::{run_experiment, Algorithm, EvalSummary, ExperimentConfig};
use fedsim::partition::{partition, Axis, PartitionScheme};
use fedsim::report::build_table;
use fedsim::synth::DatasetPreset;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let scheme_name = args.next().unwrap_or_else(|| "app-level/iid".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let data = DatasetPreset::AppLevel.build(seed)?;
    let scheme = PartitionScheme::parse(&scheme_name, 5, seed)?;
    let assignment = partition(&data.train, &scheme)?;

    let mut runs = Vec::new();
    for alg in Algorithm::ALL {
        let ks: Vec<Option<usize>> = if alg == Algorithm::LocalK { (0..5).map(Some).collect() } else { vec![None] };
        for k in ks {
            let cfg = ExperimentConfig { algorithm: alg, seed, local_k_index: k, ..Default::default() };
            let result = run_experiment(&cfg, &data.train, &assignment, &data.test)?;
            let name = match k {
                Some(k) => format!("local_{k}"),
                None => alg.to_string(),
            };
            let loss = result.rounds.last().map(|m| m.mean_local_loss).unwrap_or(f64::NAN);
            eprintln!("{name:<15} final local loss {loss:.3}");
            runs.push((name, EvalSummary::from(&result.final_eval)));
        }
    }

    let table = build_table(&runs, Axis::App)?;
    println!("\n{scheme_name}, seed {seed}: step accuracy (%)");
    print!("{:<15}", "run");
    for c in &table.columns {
        print!("{c:>9}");
    }
    println!();
    for (name, cells) in &table.rows {
        print!("{name:<15}");
        for c in cells {
            match c {
                Some(v) => print!("{v:>9.2}"),
                None => print!("{:>9}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
