//! Experiment orchestration: train defender assets once per dataset, sweep
//! the six attack scenarios across query budgets with repeated runs, and emit
//! diff-able CSV tables plus plot-ready agreement curves.
//!
//! Seed derivation is documented and literal: run `k` uses
//! `run_seed = base_seed + k`; per-purpose streams (query-subset sampling,
//! threat training) derive from the run seed via [`crate::seeding::derive`].
//! Budgets within one run share a single pool permutation, so a larger
//! budget's query set always contains the smaller one's.
//!
//! Every result row records the effective config hash; re-running a partially
//! completed experiment skips finished `(scenario, budget, run)` cells and
//! produces the same final CSV as an uninterrupted run (wall-time column
//! aside, which records whatever run actually happened).

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{collect, direct_train, sweep_alpha, KDConfig};
use crate::data::{
    generate_random_queries, load_dataset_with, make_synthetic, split, undersample_majority,
    Dataset, DatasetKind, LoadOptions, SplitSpec,
};
use crate::error::{Error, Result};
use crate::explainer::{train_explainer_pair, CounterGANConfig, ExplainerPair, GeneratorModel};
use crate::metrics::{actionability, agreement, mean_of, realism, std_of};
use crate::models::{build_target_spec, build_threat_spec, train_denoising_autoencoder};
use crate::nn::{
    load_checkpoint, save_checkpoint, train_classifier, CheckpointMeta, TrainConfig, TrainedModel,
};
use crate::privacy::DPConfig;
use crate::seeding::{self, stream};
use crate::service::{deploy, ExplanationMode, ScenarioConfig, Service};

/// The six attack scenarios: {KD, Direct} x {CF, No CF, Private CF}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    KdCf,
    DirectCf,
    KdNocf,
    DirectNocf,
    KdPrivateCf,
    DirectPrivateCf,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::KdCf,
        Scenario::DirectCf,
        Scenario::KdNocf,
        Scenario::DirectNocf,
        Scenario::KdPrivateCf,
        Scenario::DirectPrivateCf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::KdCf => "kd_cf",
            Scenario::DirectCf => "direct_cf",
            Scenario::KdNocf => "kd_nocf",
            Scenario::DirectNocf => "direct_nocf",
            Scenario::KdPrivateCf => "kd_private_cf",
            Scenario::DirectPrivateCf => "direct_private_cf",
        }
    }

    pub fn uses_kd(&self) -> bool {
        matches!(
            self,
            Scenario::KdCf | Scenario::KdNocf | Scenario::KdPrivateCf
        )
    }

    pub fn explanation_mode(&self) -> ExplanationMode {
        match self {
            Scenario::KdNocf | Scenario::DirectNocf => ExplanationMode::None,
            Scenario::KdCf | Scenario::DirectCf => ExplanationMode::Cf,
            Scenario::KdPrivateCf | Scenario::DirectPrivateCf => ExplanationMode::PrivateCf,
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .iter()
            .find(|sc| sc.name() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the defender's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic {
        n: usize,
        d: usize,
        class_separation: f64,
    },
    File {
        name: String,
        path: PathBuf,
    },
}

impl DatasetConfig {
    pub fn label(&self) -> String {
        match self {
            DatasetConfig::Synthetic { .. } => "synthetic".into(),
            DatasetConfig::File { name, .. } => name.clone(),
        }
    }
}

/// Full experiment description. Every field has an explicit default so a
/// serialized effective config spells out the entire ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub scenarios: Vec<Scenario>,
    /// Query budgets, ascending.
    pub budgets: Vec<usize>,
    pub runs: usize,
    pub base_seed: u64,
    pub train_fraction: f64,
    pub target_train: TrainConfig,
    /// Threat training cap is `epochs`; stopping is agreement convergence.
    pub threat_train: TrainConfig,
    pub countergan: CounterGANConfig,
    pub dp: DPConfig,
    pub kd: KDConfig,
    pub autoencoder_noise_std: f64,
    pub autoencoder_train: TrainConfig,
    pub pool_size: usize,
    pub query_low: f64,
    pub query_high: f64,
    pub cf_prediction_in_response: bool,
    /// Redraw the random pool per run instead of reusing one fixed pool.
    pub redraw_pool_per_run: bool,
    /// Majority-class undersampling for target training (credit-fraud style
    /// imbalance); `None` disables it.
    pub fraud_undersample_ratio: Option<f64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::Synthetic {
                n: 2000,
                d: 10,
                class_separation: 3.0,
            },
            scenarios: Scenario::ALL.to_vec(),
            budgets: vec![50, 100, 200, 300, 500, 1000],
            runs: 10,
            base_seed: 42,
            train_fraction: 0.8,
            target_train: TrainConfig::default(),
            threat_train: TrainConfig {
                epochs: 300,
                ..TrainConfig::default()
            },
            countergan: CounterGANConfig::default(),
            dp: DPConfig::default(),
            kd: KDConfig::default(),
            autoencoder_noise_std: 0.1,
            autoencoder_train: TrainConfig::default(),
            pool_size: 1000,
            query_low: -3.0,
            query_high: 3.0,
            cf_prediction_in_response: true,
            redraw_pool_per_run: false,
            fraud_undersample_ratio: Some(5.0),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Config("no scenarios selected".into()));
        }
        if self.budgets.is_empty() {
            return Err(Error::Config("no budgets selected".into()));
        }
        if self.budgets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("budgets must be ascending".into()));
        }
        if *self.budgets.last().unwrap() > self.pool_size {
            return Err(Error::Config(format!(
                "largest budget {} exceeds pool size {}",
                self.budgets.last().unwrap(),
                self.pool_size
            )));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.query_low >= self.query_high {
            return Err(Error::Config("query range must satisfy low < high".into()));
        }
        self.target_train.validate()?;
        self.threat_train.validate()?;
        self.countergan.validate()?;
        self.dp.validate()?;
        self.kd.validate()?;
        Ok(())
    }

    /// Resolve every derived seed so the serialized config is self-contained.
    pub fn effective(&self) -> ExperimentConfig {
        let mut cfg = self.clone();
        cfg.target_train.seed = seeding::derive(self.base_seed, stream::TARGET);
        cfg.autoencoder_train.seed = seeding::derive(self.base_seed, stream::AUTOENCODER);
        cfg.countergan.seed = seeding::derive(self.base_seed, stream::EXPLAINER);
        cfg.dp.seed = seeding::derive(self.base_seed, stream::DP_NOISE);
        cfg
    }

    /// SHA-256 over the canonical JSON of the effective config.
    pub fn config_hash(&self) -> String {
        let canonical =
            serde_json::to_string(&self.effective()).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex_string(&hasher.finalize())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.output_dir.join(self.dataset.label())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One results-CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub scenario: Scenario,
    pub budget: usize,
    pub run: usize,
    pub seed: u64,
    pub agreement: Option<f64>,
    pub best_alpha: Option<f64>,
    pub wall_time_seconds: f64,
    pub config_hash: String,
    pub error: Option<String>,
}

/// Mean/std aggregate over the runs of one (scenario, budget) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub scenario: Scenario,
    pub budget: usize,
    pub mean_agreement: f64,
    pub std_agreement: f64,
    pub n_runs: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl ExperimentResult {
    pub fn aggregate_for(&self, scenario: Scenario, budget: usize) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.scenario == scenario && a.budget == budget)
    }
}

/// Defender-side assets shared by every cell of an experiment.
pub struct LabAssets {
    pub train: Dataset,
    pub eval_set: Dataset,
    pub target: TrainedModel,
    pub cf_pair: Option<ExplainerPair>,
    pub dp_pair: Option<ExplainerPair>,
    pub autoencoder: Option<TrainedModel>,
}

/// Load or synthesize the dataset and split it into the defender's training
/// portion and the evaluation set.
pub fn prepare_dataset(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let data_seed = seeding::derive(config.base_seed, stream::DATA);
    let split_spec = SplitSpec {
        train_fraction: config.train_fraction,
        seed: seeding::derive(config.base_seed, stream::SPLIT),
    };
    let ds = match &config.dataset {
        DatasetConfig::Synthetic {
            n,
            d,
            class_separation,
        } => make_synthetic(*n, *d, *class_separation, data_seed)?,
        DatasetConfig::File { name, path } => {
            let kind: DatasetKind = name.parse()?;
            let opts = LoadOptions {
                standardization_split: split_spec,
                ..LoadOptions::default()
            };
            load_dataset_with(kind, path, &opts)?
        }
    };
    split(&ds, &split_spec)
}

/// Prepare (or load from checkpoints under the output directory) every asset
/// the requested scenarios need. Checkpoints are reused when present, so a
/// resumed experiment sees bit-identical defenders.
pub fn prepare_assets(
    config: &ExperimentConfig,
    need_cf: bool,
    need_dp: bool,
    need_autoencoder: bool,
) -> Result<LabAssets> {
    let effective = config.effective();
    let dir = config.dataset_dir();
    fs::create_dir_all(&dir)?;
    let (train, eval_set) = prepare_dataset(config)?;

    let target_train_set = match (&config.dataset, config.fraud_undersample_ratio) {
        (DatasetConfig::File { name, .. }, Some(ratio)) if name == "credit_fraud" => {
            undersample_majority(
                &train,
                ratio,
                seeding::derive(config.base_seed, stream::DATA),
            )?
        }
        _ => train.clone(),
    };

    let target = load_or_train(&dir.join("target.ckpt"), "classifier", || {
        let spec = build_target_spec(train.n_features(), effective.target_train.seed);
        train_classifier(&spec, &target_train_set, &effective.target_train)
    })?;

    let mut warnings: Vec<String> = Vec::new();
    let cf_pair = if need_cf {
        Some(load_or_train_pair(
            &dir,
            "gen_cf",
            &target,
            &train,
            &CounterGANConfig {
                dp: None,
                ..effective.countergan.clone()
            },
            &mut warnings,
        )?)
    } else {
        None
    };
    let dp_pair = if need_dp {
        Some(load_or_train_pair(
            &dir,
            "gen_dp",
            &target,
            &train,
            &CounterGANConfig {
                dp: Some(effective.dp),
                seed: seeding::derive(config.base_seed, stream::EXPLAINER_DP),
                ..effective.countergan.clone()
            },
            &mut warnings,
        )?)
    } else {
        None
    };
    let autoencoder = if need_autoencoder {
        Some(load_or_train(&dir.join("autoencoder.ckpt"), "autoencoder", || {
            train_denoising_autoencoder(
                &train,
                config.autoencoder_noise_std,
                &effective.autoencoder_train,
            )
        })?)
    } else {
        None
    };

    if !warnings.is_empty() {
        let mut log = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("run_log.txt"))?;
        for w in &warnings {
            writeln!(log, "{w}")?;
        }
    }

    Ok(LabAssets {
        train,
        eval_set,
        target,
        cf_pair,
        dp_pair,
        autoencoder,
    })
}

fn load_or_train(
    path: &Path,
    kind: &str,
    train: impl FnOnce() -> Result<TrainedModel>,
) -> Result<TrainedModel> {
    if path.exists() {
        let (model, meta) = load_checkpoint(path)?;
        if meta.kind != kind {
            return Err(Error::Config(format!(
                "checkpoint {} holds a {:?}, expected {kind:?}",
                path.display(),
                meta.kind
            )));
        }
        return Ok(model);
    }
    let model = train()?;
    save_checkpoint(&model, &CheckpointMeta::of_kind(kind), path)?;
    Ok(model)
}

fn load_or_train_pair(
    dir: &Path,
    prefix: &str,
    target: &TrainedModel,
    train: &Dataset,
    config: &CounterGANConfig,
    warnings: &mut Vec<String>,
) -> Result<ExplainerPair> {
    let path0 = dir.join(format!("{prefix}_0.ckpt"));
    let path1 = dir.join(format!("{prefix}_1.ckpt"));
    if path0.exists() && path1.exists() {
        let load_gen = |path: &Path| -> Result<GeneratorModel> {
            let (model, meta) = load_checkpoint(path)?;
            Ok(GeneratorModel {
                model,
                target_class: meta.target_class.ok_or_else(|| {
                    Error::Config(format!("{} lacks target_class metadata", path.display()))
                })?,
                dp: meta.dp.unwrap_or(false),
            })
        };
        return ExplainerPair::new(load_gen(&path0)?, load_gen(&path1)?);
    }

    let (pair, log) = train_explainer_pair(target, train, config)?;
    warnings.extend(log.warnings.iter().map(|w| format!("{prefix}: {w}")));
    for (target_class, path) in [(0u8, &path0), (1u8, &path1)] {
        let generator = pair.generator_for_target(target_class);
        let meta = CheckpointMeta {
            kind: "generator".into(),
            target_class: Some(target_class),
            dp: Some(generator.dp),
        };
        save_checkpoint(&generator.model, &meta, path)?;
    }
    Ok(pair)
}

/// Deploy the right service wiring for one scenario.
fn service_for(
    assets: &LabAssets,
    scenario: Scenario,
    cf_prediction_in_response: bool,
    budget: usize,
) -> Result<Service> {
    let mode = scenario.explanation_mode();
    let pair = match mode {
        ExplanationMode::None => None,
        ExplanationMode::Cf => assets.cf_pair.clone(),
        ExplanationMode::PrivateCf => assets.dp_pair.clone(),
    };
    let svc = deploy(
        assets.target.clone(),
        pair,
        ScenarioConfig {
            explanation_mode: mode,
            cf_prediction_in_response,
        },
    )?;
    Ok(svc.with_budget(budget as u64))
}

/// The query subset for (run, budget): one permutation per run, budget-length
/// prefix, so budgets nest within a run.
fn query_subset(pool: &Array2<f64>, run_seed: u64, budget: usize) -> Array2<f64> {
    let mut order: Vec<usize> = (0..pool.nrows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(run_seed, stream::SUBSET));
    order.shuffle(&mut rng);
    order.truncate(budget);
    pool.select(Axis(0), &order)
}

/// Run one (scenario, budget, run) cell against prepared assets.
pub fn run_single_cell(
    config: &ExperimentConfig,
    assets: &LabAssets,
    pool: &Array2<f64>,
    scenario: Scenario,
    budget: usize,
    run: usize,
) -> Result<ResultRow> {
    let started = Instant::now();
    let run_seed = config.base_seed + run as u64;
    let subset = query_subset(pool, run_seed, budget);
    let service = service_for(assets, scenario, config.cf_prediction_in_response, budget)?;
    let corpus = collect(&service, &subset, budget)?;

    let threat_seed = seeding::derive(run_seed, stream::THREAT);
    let spec = build_threat_spec(assets.train.n_features(), threat_seed);
    let threat_config = TrainConfig {
        seed: threat_seed,
        ..config.threat_train
    };

    let (model, best_alpha) = if scenario.uses_kd() {
        let outcome = sweep_alpha(
            &corpus,
            &spec,
            &config.kd,
            &threat_config,
            &assets.eval_set,
            &assets.target,
        )?;
        (outcome.best_model, Some(outcome.best_alpha))
    } else {
        (direct_train(&corpus, &spec, &threat_config)?, None)
    };
    let agreement = agreement(&model, &assets.target, &assets.eval_set)?;

    Ok(ResultRow {
        dataset: config.dataset.label(),
        scenario,
        budget,
        run,
        seed: run_seed,
        agreement: Some(agreement),
        best_alpha,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        config_hash: config.config_hash(),
        error: None,
    })
}

/// Run the whole experiment grid, resuming any rows already present in
/// `results.csv`, and finish with deterministic aggregates.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let dir = config.dataset_dir();
    fs::create_dir_all(&dir)?;
    let hash = config.config_hash();
    fs::write(
        dir.join("effective_config.json"),
        serde_json::to_string_pretty(&config.effective())?,
    )?;

    let need_cf = config
        .scenarios
        .iter()
        .any(|s| s.explanation_mode() == ExplanationMode::Cf);
    let need_dp = config
        .scenarios
        .iter()
        .any(|s| s.explanation_mode() == ExplanationMode::PrivateCf);
    let assets = prepare_assets(config, need_cf, need_dp, false)?;

    let results_path = dir.join("results.csv");
    let mut rows = read_result_rows(&results_path)?;
    for row in &rows {
        if row.config_hash != hash {
            return Err(Error::Config(format!(
                "{} holds rows for config {}..., current config is {}...; \
                 use a fresh output directory",
                results_path.display(),
                &row.config_hash[..12.min(row.config_hash.len())],
                &hash[..12]
            )));
        }
    }
    let mut done: BTreeSet<(Scenario, usize, usize)> = rows
        .iter()
        .map(|r| (r.scenario, r.budget, r.run))
        .collect();

    let base_pool = generate_random_queries(
        config.pool_size,
        assets.train.n_features(),
        config.query_low,
        config.query_high,
        seeding::derive(config.base_seed, stream::POOL),
    )?;

    for &scenario in &config.scenarios {
        for &budget in &config.budgets {
            for run in 0..config.runs {
                if done.contains(&(scenario, budget, run)) {
                    continue;
                }
                let pool = if config.redraw_pool_per_run {
                    generate_random_queries(
                        config.pool_size,
                        assets.train.n_features(),
                        config.query_low,
                        config.query_high,
                        seeding::derive(config.base_seed + run as u64, stream::POOL),
                    )?
                } else {
                    base_pool.clone()
                };
                let row = match run_single_cell(config, &assets, &pool, scenario, budget, run) {
                    Ok(row) => row,
                    Err(e) => ResultRow {
                        dataset: config.dataset.label(),
                        scenario,
                        budget,
                        run,
                        seed: config.base_seed + run as u64,
                        agreement: None,
                        best_alpha: None,
                        wall_time_seconds: 0.0,
                        config_hash: hash.clone(),
                        error: Some(e.to_string()),
                    },
                };
                rows.push(row);
                done.insert((scenario, budget, run));
                // Incremental write so interrupted runs resume.
                write_results_csv(&results_path, &rows, &[])?;
            }
        }
    }

    sort_rows(&mut rows, config);
    let aggregates = aggregate(&rows);
    write_results_csv(&results_path, &rows, &aggregates)?;
    Ok(ExperimentResult { rows, aggregates })
}

fn sort_rows(rows: &mut [ResultRow], config: &ExperimentConfig) {
    let order: Vec<Scenario> = config.scenarios.clone();
    rows.sort_by_key(|r| {
        let si = order.iter().position(|s| *s == r.scenario).unwrap_or(99);
        (si, r.budget, r.run)
    });
}

fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut cells: Vec<(Scenario, usize)> = Vec::new();
    for r in rows {
        if !cells.contains(&(r.scenario, r.budget)) {
            cells.push((r.scenario, r.budget));
        }
    }
    cells
        .into_iter()
        .map(|(scenario, budget)| {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.scenario == scenario && r.budget == budget)
                .filter_map(|r| r.agreement)
                .collect();
            AggregateRow {
                dataset: rows[0].dataset.clone(),
                scenario,
                budget,
                mean_agreement: mean_of(&values),
                std_agreement: std_of(&values),
                n_runs: values.len(),
            }
        })
        .collect()
}

const CSV_HEADER: [&str; 11] = [
    "dataset",
    "scenario",
    "budget",
    "run",
    "seed",
    "agreement",
    "agreement_std",
    "best_alpha",
    "wall_time_seconds",
    "config_hash",
    "error",
];

fn fmt_float(v: f64) -> String {
    // 9 significant digits, scientific.
    format!("{v:.8e}")
}

fn write_results_csv(
    path: &Path,
    rows: &[ResultRow],
    aggregates: &[AggregateRow],
) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(CSV_HEADER)?;
        for r in rows {
            w.write_record([
                r.dataset.as_str(),
                r.scenario.name(),
                &r.budget.to_string(),
                &r.run.to_string(),
                &r.seed.to_string(),
                &r.agreement.map(fmt_float).unwrap_or_default(),
                "",
                &r.best_alpha.map(fmt_float).unwrap_or_default(),
                &fmt_float(r.wall_time_seconds),
                &r.config_hash,
                r.error.as_deref().unwrap_or(""),
            ])?;
        }
        for a in aggregates {
            w.write_record([
                a.dataset.as_str(),
                a.scenario.name(),
                &a.budget.to_string(),
                "aggregate",
                "",
                &fmt_float(a.mean_agreement),
                &fmt_float(a.std_agreement),
                "",
                "",
                "",
                "",
            ])?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Parse per-run rows back from a results CSV (aggregate rows are skipped).
pub fn read_result_rows(path: &Path) -> Result<Vec<ResultRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let get = |i: usize| record.get(i).unwrap_or("").to_string();
        if get(3) == "aggregate" {
            continue;
        }
        let parse_opt = |s: String| -> Option<f64> {
            if s.is_empty() {
                None
            } else {
                s.parse().ok()
            }
        };
        rows.push(ResultRow {
            dataset: get(0),
            scenario: get(1).parse()?,
            budget: get(2)
                .parse()
                .map_err(|e| Error::Input(format!("bad budget: {e}")))?,
            run: get(3)
                .parse()
                .map_err(|e| Error::Input(format!("bad run: {e}")))?,
            seed: get(4).parse().unwrap_or(0),
            agreement: parse_opt(get(5)),
            best_alpha: parse_opt(get(7)),
            wall_time_seconds: get(8).parse().unwrap_or(0.0),
            config_hash: get(9),
            error: {
                let e = get(10);
                if e.is_empty() {
                    None
                } else {
                    Some(e)
                }
            },
        });
    }
    Ok(rows)
}

/// Rebuild an [`ExperimentResult`] from a persisted results CSV.
pub fn load_results(path: &Path) -> Result<ExperimentResult> {
    let rows = read_result_rows(path)?;
    if rows.is_empty() {
        return Err(Error::Input(format!(
            "{} has no result rows",
            path.display()
        )));
    }
    let aggregates = aggregate(&rows);
    Ok(ExperimentResult { rows, aggregates })
}

/// Emit per-scenario series files (budget, mean, std) plus a rendered SVG
/// with a log-scaled budget axis.
pub fn plot_curves(result: &ExperimentResult, out: &Path) -> Result<Vec<PathBuf>> {
    if result.aggregates.is_empty() {
        return Err(Error::Contract("no aggregate rows to plot".into()));
    }
    let curves_dir = out.join("curves");
    fs::create_dir_all(&curves_dir)?;
    let mut written = Vec::new();

    let mut scenarios: Vec<Scenario> = Vec::new();
    for a in &result.aggregates {
        if !scenarios.contains(&a.scenario) {
            scenarios.push(a.scenario);
        }
    }
    for scenario in &scenarios {
        let path = curves_dir.join(format!("{}.csv", scenario.name()));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["budget", "mean_agreement", "std_agreement"])?;
        for a in result.aggregates.iter().filter(|a| a.scenario == *scenario) {
            w.write_record([
                a.budget.to_string(),
                fmt_float(a.mean_agreement),
                fmt_float(a.std_agreement),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }

    let svg_path = curves_dir.join("agreement.svg");
    fs::write(&svg_path, render_svg(result, &scenarios))?;
    written.push(svg_path);
    Ok(written)
}

fn render_svg(result: &ExperimentResult, scenarios: &[Scenario]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const ML: f64 = 60.0;
    const MR: f64 = 180.0;
    const MT: f64 = 20.0;
    const MB: f64 = 50.0;
    let colors = [
        "#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#d35400", "#16a085",
    ];

    let budgets: Vec<usize> = {
        let mut b: Vec<usize> = result.aggregates.iter().map(|a| a.budget).collect();
        b.sort_unstable();
        b.dedup();
        b
    };
    let (xmin, xmax) = (
        (*budgets.first().unwrap() as f64).ln(),
        (*budgets.last().unwrap() as f64).max(budgets[0] as f64 * 1.01).ln(),
    );
    let ys: Vec<f64> = result.aggregates.iter().map(|a| a.mean_agreement).collect();
    let ymin = (ys.iter().cloned().fold(f64::INFINITY, f64::min) - 0.05).max(0.0);
    let ymax = (ys.iter().cloned().fold(0.0f64, f64::max) + 0.05).min(1.0);

    let x_of = |b: usize| ML + ((b as f64).ln() - xmin) / (xmax - xmin).max(1e-9) * (W - ML - MR);
    let y_of = |v: f64| MT + (ymax - v) / (ymax - ymin).max(1e-9) * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{0}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR
    ));
    for &b in &budgets {
        let x = x_of(b);
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{b}</text>\n",
            H - MB + 16.0
        ));
    }
    for tick in 0..=4 {
        let v = ymin + (ymax - ymin) * tick as f64 / 4.0;
        let y = y_of(v);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{v:.2}</text>\n\
             <line x1=\"{ML}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\" stroke-dasharray=\"4 3\"/>\n",
            ML - 6.0,
            y + 4.0,
            W - MR
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">queries</text>\n\
         <text x=\"16\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 16 {2})\" text-anchor=\"middle\">agreement</text>\n",
        ML + (W - ML - MR) / 2.0,
        H - 12.0,
        MT + (H - MT - MB) / 2.0
    ));

    for (i, scenario) in scenarios.iter().enumerate() {
        let color = colors[i % colors.len()];
        let pts: Vec<String> = result
            .aggregates
            .iter()
            .filter(|a| a.scenario == *scenario)
            .map(|a| format!("{:.2},{:.2}", x_of(a.budget), y_of(a.mean_agreement)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        ));
        let ly = MT + 16.0 + i as f64 * 18.0;
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{2}\" y=\"{3}\" font-size=\"11\">{4}</text>\n",
            W - MR + 10.0,
            W - MR + 34.0,
            W - MR + 40.0,
            ly + 4.0,
            scenario.name()
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// The two quality tables: (prediction gain, actionability) for CF vs
/// private CF, and realism for random points vs both kinds of CF.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualityTables {
    pub gain_cf: (f64, f64),
    pub gain_private: (f64, f64),
    pub actionability_cf: (f64, f64),
    pub actionability_private: (f64, f64),
    pub realism_random: (f64, f64),
    pub realism_cf: (f64, f64),
    pub realism_private: (f64, f64),
    pub n: usize,
}

/// Evaluate counterfactual quality over the full query pool and write
/// `quality_tables.csv` (both tables stacked, with a `table` column).
pub fn reproduce_quality_tables(config: &ExperimentConfig) -> Result<QualityTables> {
    config.validate()?;
    let assets = prepare_assets(config, true, true, true)?;
    let cf_pair = assets
        .cf_pair
        .as_ref()
        .ok_or_else(|| Error::Config("missing CF generator pair".into()))?;
    let dp_pair = assets
        .dp_pair
        .as_ref()
        .ok_or_else(|| Error::Config("missing private CF generator pair".into()))?;
    let autoencoder = assets
        .autoencoder
        .as_ref()
        .ok_or_else(|| Error::Config("missing autoencoder".into()))?;

    let pool = generate_random_queries(
        config.pool_size,
        assets.train.n_features(),
        config.query_low,
        config.query_high,
        seeding::derive(config.base_seed, stream::POOL),
    )?;

    let cf = cf_pair.apply_batch(&assets.target, &pool)?;
    let cf_dp = dp_pair.apply_batch(&assets.target, &pool)?;

    let gains = |cfm: &Array2<f64>| -> Result<Vec<f64>> {
        let fx = assets.target.forward_batch(&pool)?;
        let fc = assets.target.forward_batch(cfm)?;
        Ok((0..pool.nrows())
            .map(|i| {
                let target_class = if fx[[i, 1]] > fx[[i, 0]] { 0 } else { 1 };
                (fc[[i, target_class]] - fx[[i, target_class]]).max(0.0)
            })
            .collect())
    };
    let gain_cf = gains(&cf)?;
    let gain_dp = gains(&cf_dp)?;
    let (act_cf, _) = actionability(&pool, &cf)?;
    let (act_dp, _) = actionability(&pool, &cf_dp)?;
    let (re_rand, _) = realism(autoencoder, &pool)?;
    let (re_cf, _) = realism(autoencoder, &cf)?;
    let (re_dp, _) = realism(autoencoder, &cf_dp)?;

    let stat = |v: &[f64]| (mean_of(v), std_of(v));
    let tables = QualityTables {
        gain_cf: stat(&gain_cf),
        gain_private: stat(&gain_dp),
        actionability_cf: stat(&act_cf),
        actionability_private: stat(&act_dp),
        realism_random: stat(&re_rand),
        realism_cf: stat(&re_cf),
        realism_private: stat(&re_dp),
        n: pool.nrows(),
    };

    let dir = config.dataset_dir();
    fs::create_dir_all(&dir)?;
    let mut w = csv::Writer::from_path(dir.join("quality_tables.csv"))?;
    w.write_record(["table", "metric", "variant", "mean", "std", "n"])?;
    let mut row = |table: &str, metric: &str, variant: &str, (m, s): (f64, f64)| {
        w.write_record([
            table,
            metric,
            variant,
            &fmt_float(m),
            &fmt_float(s),
            &tables.n.to_string(),
        ])
    };
    row("quality", "prediction_gain", "cf", tables.gain_cf)?;
    row("quality", "prediction_gain", "private_cf", tables.gain_private)?;
    row("quality", "actionability", "cf", tables.actionability_cf)?;
    row("quality", "actionability", "private_cf", tables.actionability_private)?;
    row("realism", "realism", "random", tables.realism_random)?;
    row("realism", "realism", "cf", tables.realism_cf)?;
    row("realism", "realism", "private_cf", tables.realism_private)?;
    w.flush()?;
    Ok(tables)
}
