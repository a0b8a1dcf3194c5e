//! FedAvg against the best single-client baseline across app-level
//! partitions and a grid of seeds. Medians are printed per scheme.
//!
//! ```text
//! cargo run --release --example heterogeneity_grid [n_seeds]
//! ```

use fedsim::orchestrator::{run_experiment, Algorithm, ExperimentConfig};
use fedsim::partition::{partition, PartitionScheme};
use fedsim::synth::DatasetPreset;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_seeds: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let schemes = ["app-level/iid", "app-level/non-uniform", "app-level/half-skew", "app-level/skew"];
    println!("{:<24} {:>10} {:>12} {:>10}", "scheme", "FedAvg", "best local", "central");
    for name in schemes {
        let (mut fed, mut local, mut central) = (Vec::new(), Vec::new(), Vec::new());
        for seed in 0..n_seeds {
            let data = DatasetPreset::AppLevel.build(seed)?;
            let assignment = partition(&data.train, &PartitionScheme::parse(name, 5, seed)?)?;
            let run = |algorithm, k| -> Result<f64, Box<dyn std::error::Error>> {
                let cfg = ExperimentConfig { algorithm, seed, local_k_index: k, ..Default::default() };
                Ok(run_experiment(&cfg, &data.train, &assignment, &data.test)?.final_eval.step_accuracy)
            };
            fed.push(run(Algorithm::FedAvg, None)?);
            central.push(run(Algorithm::Central, None)?);
            let mut best = 0.0f64;
            for k in 0..5 {
                best = best.max(run(Algorithm::LocalK, Some(k))?);
            }
            local.push(best);
        }
        println!("{name:<24} {:>10.3} {:>12.3} {:>10.3}", median(fed), median(local), median(central));
    }
    Ok(())
}
