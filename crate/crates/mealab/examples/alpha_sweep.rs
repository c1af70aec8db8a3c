//! Sweep the distillation weight alpha over {0.0 .. 0.5} on one collected
//! corpus and report agreement per value, the way the experiment runner picks
//! its winner.
//!
//! ```bash
//! cargo run --release --example alpha_sweep
//! ```

use mealab::attack::{collect, sweep_alpha, KDConfig};
use mealab::data::{generate_random_queries, make_synthetic, split, SplitSpec};
use mealab::explainer::{train_explainer_pair, CounterGANConfig};
use mealab::models::{build_target_spec, build_threat_spec};
use mealab::nn::{train_classifier, TrainConfig};
use mealab::service::{deploy, ExplanationMode, ScenarioConfig};

fn main() -> mealab::Result<()> {
    let ds = make_synthetic(2000, 10, 3.0, 23)?;
    let (train, eval) = split(&ds, &SplitSpec::default())?;
    let target = train_classifier(&build_target_spec(10, 23), &train, &TrainConfig::default())?;
    let (pair, _) = train_explainer_pair(
        &target,
        &train,
        &CounterGANConfig {
            seed: 23,
            ..CounterGANConfig::default()
        },
    )?;
    let service = deploy(
        target.clone(),
        Some(pair),
        ScenarioConfig::new(ExplanationMode::Cf),
    )?;
    let pool = generate_random_queries(1000, 10, -3.0, 3.0, 29)?;
    let corpus = collect(&service, &pool, 100)?;

    let outcome = sweep_alpha(
        &corpus,
        &build_threat_spec(10, 31),
        &KDConfig::default(),
        &TrainConfig {
            epochs: 300,
            seed: 31,
            ..TrainConfig::default()
        },
        &eval,
        &target,
    )?;

    println!("alpha   agreement");
    for (alpha, agr) in &outcome.per_alpha {
        let marker = if *alpha == outcome.best_alpha { "  <- best" } else { "" };
        println!("{alpha:<7.2} {agr:.4}{marker}");
    }
    Ok(())
}
