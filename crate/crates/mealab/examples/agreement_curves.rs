//! A small end-to-end experiment grid: two scenarios, three budgets, three
//! runs. Writes results.csv, per-scenario curve files and an SVG under a
//! temporary directory.
//!
//! ```bash
//! cargo run --release --example agreement_curves
//! ```

use mealab::experiment::{plot_curves, run_experiment, DatasetConfig, ExperimentConfig, Scenario};

fn main() -> mealab::Result<()> {
    let out = std::env::temp_dir().join("mealab_example_curves");
    let config = ExperimentConfig {
        dataset: DatasetConfig::Synthetic {
            n: 1000,
            d: 6,
            class_separation: 3.0,
        },
        scenarios: vec![Scenario::KdCf, Scenario::DirectNocf],
        budgets: vec![50, 100, 200],
        runs: 3,
        base_seed: 1,
        output_dir: out.clone(),
        ..ExperimentConfig::default()
    };

    let result = run_experiment(&config)?;
    println!("scenario        budget  mean agreement  std");
    for a in &result.aggregates {
        println!(
            "{:<15} {:<7} {:<15.4} {:.4}",
            a.scenario.name(),
            a.budget,
            a.mean_agreement,
            a.std_agreement
        );
    }
    let written = plot_curves(&result, &config.dataset_dir())?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
