//! One full extraction attack: deploy the service with counterfactual
//! explanations, query it with random points, and train substitutes both
//! directly and by distillation. Prints the agreement each attacker reaches
//! and exports the service's audit trace.
//!
//! ```bash
//! cargo run --release --example extraction_attack
//! ```

use mealab::attack::{collect, direct_train, kd_train, KDConfig, Provenance};
use mealab::data::{generate_random_queries, make_synthetic, split, SplitSpec};
use mealab::explainer::{train_explainer_pair, CounterGANConfig};
use mealab::metrics::agreement;
use mealab::models::{build_target_spec, build_threat_spec};
use mealab::nn::{train_classifier, TrainConfig};
use mealab::service::{deploy, ExplanationMode, ScenarioConfig};

fn main() -> mealab::Result<()> {
    let ds = make_synthetic(2000, 10, 3.0, 3)?;
    let (train, eval) = split(&ds, &SplitSpec::default())?;
    println!("training target...");
    let target = train_classifier(
        &build_target_spec(10, 3),
        &train,
        &TrainConfig::default(),
    )?;
    println!("training explainer pair...");
    let (pair, _) = train_explainer_pair(
        &target,
        &train,
        &CounterGANConfig {
            seed: 3,
            ..CounterGANConfig::default()
        },
    )?;

    let budget = 100;
    let service = deploy(
        target.clone(),
        Some(pair),
        ScenarioConfig::new(ExplanationMode::Cf),
    )?
    .with_budget(budget as u64);

    let pool = generate_random_queries(1000, 10, -3.0, 3.0, 5)?;
    let corpus = collect(&service, &pool, budget)?;
    println!(
        "collected {} rows from {} queries ({} counterfactuals)",
        corpus.len(),
        service.total_queries(),
        corpus.count_by_provenance(Provenance::Counterfactual)
    );

    let spec = build_threat_spec(10, 17);
    let threat_config = TrainConfig {
        epochs: 300,
        seed: 17,
        ..TrainConfig::default()
    };
    let direct = direct_train(&corpus, &spec, &threat_config)?;
    let kd = kd_train(
        &corpus,
        &spec,
        &KDConfig {
            alpha: 0.3,
            ..KDConfig::default()
        },
        &threat_config,
    )?;

    println!(
        "agreement on the evaluation set: direct {:.4}, distillation {:.4}",
        agreement(&direct, &target, &eval)?,
        agreement(&kd, &target, &eval)?
    );

    let trace_path = std::env::temp_dir().join("mealab_example_trace.jsonl");
    service.export_trace(std::fs::File::create(&trace_path)?)?;
    println!("audit trace -> {}", trace_path.display());
    Ok(())
}
