//! Reproduce the counterfactual-quality tables: prediction gain and
//! actionability for plain vs private counterfactuals, and realism of random
//! queries vs both kinds of counterfactual, over the full query pool.
//!
//! ```bash
//! cargo run --release --example quality_tables
//! ```

use mealab::experiment::{reproduce_quality_tables, DatasetConfig, ExperimentConfig};

fn main() -> mealab::Result<()> {
    let out = std::env::temp_dir().join("mealab_example_tables");
    let config = ExperimentConfig {
        dataset: DatasetConfig::Synthetic {
            n: 1500,
            d: 8,
            class_separation: 3.0,
        },
        pool_size: 500,
        base_seed: 9,
        output_dir: out.clone(),
        ..ExperimentConfig::default()
    };

    let t = reproduce_quality_tables(&config)?;
    println!("over {} pool points:", t.n);
    println!();
    println!("                    cf                private cf");
    println!(
        "prediction gain     {:<8.3}+/-{:<6.3} {:<8.3}+/-{:.3}",
        t.gain_cf.0, t.gain_cf.1, t.gain_private.0, t.gain_private.1
    );
    println!(
        "actionability       {:<8.3}+/-{:<6.3} {:<8.3}+/-{:.3}",
        t.actionability_cf.0, t.actionability_cf.1, t.actionability_private.0, t.actionability_private.1
    );
    println!();
    println!(
        "realism: random {:.3}+/-{:.3} | cf {:.3}+/-{:.3} | private {:.3}+/-{:.3}",
        t.realism_random.0,
        t.realism_random.1,
        t.realism_cf.0,
        t.realism_cf.1,
        t.realism_private.0,
        t.realism_private.1
    );
    println!(
        "csv -> {}",
        config.dataset_dir().join("quality_tables.csv").display()
    );
    Ok(())
}
