//! Command-line front end: each pipeline stage as a subcommand, all state on
//! disk under the configured output directory. The library does the work;
//! this binary only parses flags, loads the config and prints summaries.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mealab::data::generate_random_queries;
use mealab::experiment::{
    load_results, plot_curves, prepare_assets, reproduce_quality_tables, run_experiment,
    run_single_cell, ExperimentConfig, Scenario,
};
use mealab::metrics::agreement;
use mealab::seeding::{self, stream};

#[derive(Parser)]
#[command(
    name = "mealab",
    about = "Model-extraction laboratory: black-box MLaaS with counterfactual explanations",
    version
)]
struct Cli {
    /// JSON experiment config; defaults apply for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the target classifier and checkpoint it.
    TrainTarget,
    /// Train the counterfactual generator pair (add --private for DP).
    TrainExplainer {
        /// Train the differentially private pair instead of the plain one.
        #[arg(long)]
        private: bool,
    },
    /// Train the denoising autoencoder used by the realism metric.
    TrainAutoencoder,
    /// Run a single attack cell and print the agreement.
    Attack {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Run the full scenario x budget x run grid into results.csv.
    Experiment,
    /// Evaluate counterfactual quality into quality_tables.csv.
    Tables,
    /// Render agreement curves from an existing results.csv.
    Plot,
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            serde_json::from_str(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.base_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::TrainTarget => {
            let assets = prepare_assets(&config, false, false, false)?;
            let acc = assets.target.accuracy(&assets.eval_set)?;
            println!(
                "target ready: {} (eval accuracy {:.4})",
                config.dataset_dir().join("target.ckpt").display(),
                acc
            );
        }
        Command::TrainExplainer { private } => {
            let assets = prepare_assets(&config, !private, *private, false)?;
            let prefix = if *private { "gen_dp" } else { "gen_cf" };
            let pair = if *private {
                assets.dp_pair.as_ref()
            } else {
                assets.cf_pair.as_ref()
            }
            .expect("pair trained");
            println!(
                "explainer pair ready (dp={}): {} and {}",
                pair.is_dp(),
                config.dataset_dir().join(format!("{prefix}_0.ckpt")).display(),
                config.dataset_dir().join(format!("{prefix}_1.ckpt")).display()
            );
        }
        Command::TrainAutoencoder => {
            prepare_assets(&config, false, false, true)?;
            println!(
                "autoencoder ready: {}",
                config.dataset_dir().join("autoencoder.ckpt").display()
            );
        }
        Command::Attack {
            scenario,
            budget,
            run,
        } => {
            let scenario: Scenario = scenario.parse()?;
            let need_cf = scenario == Scenario::KdCf || scenario == Scenario::DirectCf;
            let need_dp =
                scenario == Scenario::KdPrivateCf || scenario == Scenario::DirectPrivateCf;
            let assets = prepare_assets(&config, need_cf, need_dp, false)?;
            let pool = generate_random_queries(
                config.pool_size,
                assets.train.n_features(),
                config.query_low,
                config.query_high,
                seeding::derive(config.base_seed, stream::POOL),
            )?;
            let row = run_single_cell(&config, &assets, &pool, scenario, *budget, *run)?;
            let upper = {
                let corpus = mealab::attack::AttackDataset::from_labeled_dataset(&assets.train);
                let spec = mealab::models::build_threat_spec(
                    assets.train.n_features(),
                    seeding::derive(config.base_seed, stream::THREAT),
                );
                let model = mealab::attack::direct_train(&corpus, &spec, &config.threat_train)?;
                agreement(&model, &assets.target, &assets.eval_set)?
            };
            println!(
                "scenario={} budget={} run={} agreement={:.4}{} (perfect-knowledge bound {:.4})",
                scenario,
                budget,
                run,
                row.agreement.unwrap_or(f64::NAN),
                row.best_alpha
                    .map(|a| format!(" best_alpha={a}"))
                    .unwrap_or_default(),
                upper
            );
        }
        Command::Experiment => {
            let result = run_experiment(&config)?;
            let written = plot_curves(&result, &config.dataset_dir())?;
            println!(
                "experiment complete: {} rows, {} aggregates -> {}",
                result.rows.len(),
                result.aggregates.len(),
                config.dataset_dir().join("results.csv").display()
            );
            for path in written {
                println!("  wrote {}", path.display());
            }
        }
        Command::Tables => {
            let tables = reproduce_quality_tables(&config)?;
            println!(
                "quality tables -> {}",
                config.dataset_dir().join("quality_tables.csv").display()
            );
            println!(
                "  prediction gain: cf {:.3} +/- {:.3}, private {:.3} +/- {:.3}",
                tables.gain_cf.0, tables.gain_cf.1, tables.gain_private.0, tables.gain_private.1
            );
            println!(
                "  actionability:   cf {:.3} +/- {:.3}, private {:.3} +/- {:.3}",
                tables.actionability_cf.0,
                tables.actionability_cf.1,
                tables.actionability_private.0,
                tables.actionability_private.1
            );
            println!(
                "  realism: random {:.3}, cf {:.3}, private {:.3}",
                tables.realism_random.0, tables.realism_cf.0, tables.realism_private.0
            );
        }
        Command::Plot => {
            let result = load_results(&config.dataset_dir().join("results.csv"))?;
            let written = plot_curves(&result, &config.dataset_dir())?;
            for path in written {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}
