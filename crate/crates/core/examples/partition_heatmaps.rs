//! Partitions the app-level and category-level presets under every variant
//! and prints the client-by-label episode matrix with its verification result.
//!
//! ```text
//! cargo run --example partition_heatmaps
//! ```

use fedsim::partition::{distribution_matrix, partition, verify_partition, Axis, Family, PartitionScheme};
use fedsim::synth::DatasetPreset;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (family, preset, axis) in [
        (Family::AppLevel, DatasetPreset::AppLevel, Axis::App),
        (Family::CategoryLevel, DatasetPreset::CategoryLevel, Axis::Category),
    ] {
        let data = preset.build(1)?;
        for &variant in family.variants() {
            let scheme = PartitionScheme::new(family, variant, 5, 1)?;
            let assignment = partition(&data.train, &scheme)?;
            let report = verify_partition(&data.train, &assignment)?;
            let m = distribution_matrix(&data.train, &assignment, axis);
            println!("\n{} (verified: {})", scheme.name(), report.ok);
            print!("{:>8}", "client");
            for l in &m.labels {
                print!("{:>9}", &l[..l.len().min(8)]);
            }
            println!();
            for (c, row) in m.counts.iter().enumerate() {
                print!("{c:>8}");
                for x in row {
                    print!("{x:>9}");
                }
                println!();
            }
        }
    }
    Ok(())
}
