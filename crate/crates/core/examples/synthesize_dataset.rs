//! Builds every dataset preset and prints its shape, then writes a custom
//! three-app dataset to a temporary file and reads it back.
//!
//! ```text
//! cargo run --example synthesize_dataset
//! ```

use fedsim::data::{dataset_stats, load_dataset, save_dataset};
use fedsim::synth::{generate_synthetic_dataset, DatasetPreset, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:<16} {:>6} {:>7} {:>5} {:>5} {:>6}", "preset", "train", "steps", "apps", "cats", "test");
    for name in ["basic-ac-200", "basic-ac-7000", "step-episode", "category-level", "app-level", "scaleapp"] {
        let preset: DatasetPreset = name.parse()?;
        let data = preset.build(0)?;
        let s = dataset_stats(&data.train);
        println!(
            "{name:<16} {:>6} {:>7} {:>5} {:>5} {:>6}",
            s.n_episodes,
            s.n_steps,
            s.n_apps,
            s.n_categories,
            data.test.len()
        );
    }

    let profile = vec![("Amazon".to_string(), 3.0), ("Gmail".to_string(), 2.0), ("Booking".to_string(), 1.0)];
    let episodes = generate_synthetic_dataset(&SyntheticSpec::new(60, profile, 6.0, 42))?;
    let dir = std::env::temp_dir().join("fedsim-synth-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("custom.jsonl");
    save_dataset(&path, &episodes)?;
    let back = load_dataset(&path)?;
    assert_eq!(back, episodes);

    let first = &back[0];
    println!("\ncustom profile: {} episodes written to {}", back.len(), path.display());
    println!("first episode `{}` ({}, {:?}): {}", first.episode_id, first.app, first.category, first.instruction);
    for step in first.steps.iter().take(4) {
        println!("  {:>2} {:<14} {}", step.index, step.action_type.as_str(), step.action_args);
    }
    for (app, c) in dataset_stats(&back).per_app {
        println!("  {app:<8} {:>3} episodes {:>4} steps", c.episodes, c.steps);
    }
    Ok(())
}
