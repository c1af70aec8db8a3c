//! Residual-GAN counterfactual explainer with the classifier in the loop.
//!
//! The generator `G` maps a point to a residual and the counterfactual is
//! always `c = x + G(x)`, nothing else. The discriminator's real-data term is
//! weighted by the classifier's confidence in the target class, so `D` learns
//! "realistic and target-class-like" and pushes `G` toward the desired side
//! of the boundary. One generator is trained per target class; dispatch picks
//! the generator whose target differs from the classifier's prediction.
//!
//! With a [`DPConfig`] attached, every generator update runs through DP-Adam
//! (per-example clipping plus calibrated noise); discriminator updates stay
//! non-private.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward, backward_per_example, forward, forward_train, init_params, AdamConfig,
    AdamState, HiddenActivation, MLPSpec, OutputActivation, SoftPrediction, TrainedModel,
};
use crate::privacy::{dp_adam_step, DPConfig, DpAdamState};
use crate::seeding;

pub const GENERATOR_HIDDEN: [usize; 3] = [64, 48, 32];
pub const DISCRIMINATOR_HIDDEN: [usize; 2] = [32, 16];

const LOG_FLOOR: f64 = 1e-12;
const DEGENERATE_BATCH_RETRIES: usize = 10;
const COLLAPSE_STD: f64 = 1e-6;
const COLLAPSE_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterGANConfig {
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    /// Dropout after each discriminator hidden layer.
    pub dropout: f64,
    pub target_class: u8,
    /// Weight of the classifier cross-entropy term in the generator loss.
    pub lambda_cls: f64,
    /// Weight of the L1 residual penalty in the generator loss.
    pub lambda_reg: f64,
    /// Alternating steps (one discriminator + one generator update each).
    pub steps: usize,
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub seed: u64,
    /// When set, generator updates use DP-Adam.
    pub dp: Option<DPConfig>,
}

impl Default for CounterGANConfig {
    fn default() -> Self {
        CounterGANConfig {
            generator_hidden: GENERATOR_HIDDEN.to_vec(),
            discriminator_hidden: DISCRIMINATOR_HIDDEN.to_vec(),
            dropout: 0.2,
            target_class: 1,
            lambda_cls: 1.0,
            lambda_reg: 0.1,
            steps: 2000,
            batch_size: 64,
            lr_g: 1e-4,
            lr_d: 1e-4,
            seed: 0,
            dp: None,
        }
    }
}

impl CounterGANConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_class > 1 {
            return Err(Error::Config("target_class must be 0 or 1".into()));
        }
        if !(self.lambda_cls > 0.0) {
            return Err(Error::Config("lambda_cls must be positive".into()));
        }
        if self.lambda_reg < 0.0 {
            return Err(Error::Config("lambda_reg must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr_g > 0.0 && self.lr_d > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if let Some(dp) = &self.dp {
            dp.validate()?;
        }
        Ok(())
    }

    pub fn generator_spec(&self, d: usize) -> MLPSpec {
        let mut layers = Vec::with_capacity(self.generator_hidden.len() + 2);
        layers.push(d);
        layers.extend_from_slice(&self.generator_hidden);
        layers.push(d);
        MLPSpec::new(
            layers,
            HiddenActivation::Relu,
            OutputActivation::Linear,
            seeding::derive(self.seed, 0xB1),
        )
    }

    pub fn discriminator_spec(&self, d: usize) -> MLPSpec {
        let mut layers = Vec::with_capacity(self.discriminator_hidden.len() + 2);
        layers.push(d);
        layers.extend_from_slice(&self.discriminator_hidden);
        layers.push(1);
        let mut spec = MLPSpec::new(
            layers,
            HiddenActivation::Relu,
            OutputActivation::Sigmoid,
            seeding::derive(self.seed, 0xB2),
        );
        spec.dropout_after_hidden = self.dropout;
        spec
    }
}

/// A trained residual generator: linear output of width `d`, interpreted as
/// the perturbation added to the input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorModel {
    pub model: TrainedModel,
    pub target_class: u8,
    pub dp: bool,
}

impl GeneratorModel {
    pub fn residuals(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.model.forward_batch(x)
    }

    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xm = Array2::from_shape_vec((1, x.len()), x.to_vec())
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.residuals(&xm)?.row(0).to_vec())
    }

    /// `x + G(x)` for every row.
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(x + &self.residuals(x)?)
    }
}

/// A trained discriminator with a scalar sigmoid output in (0, 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminatorModel {
    pub model: TrainedModel,
}

impl DiscriminatorModel {
    pub fn scores(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        Ok(self.model.forward_batch(x)?.column(0).to_vec())
    }
}

/// An input, its counterfactual `c = x + G(x)`, and the classifier's
/// confidence scores on both.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CFPair {
    pub x: Vec<f64>,
    pub c: Vec<f64>,
    pub fx: SoftPrediction,
    pub fc: SoftPrediction,
}

/// The two per-class generators plus the dispatch rule.
#[derive(Debug, Clone)]
pub struct ExplainerPair {
    generators: [GeneratorModel; 2],
}

impl ExplainerPair {
    /// Both generators must target different classes and agree on `dp`.
    pub fn new(gen0: GeneratorModel, gen1: GeneratorModel) -> Result<Self> {
        if gen0.target_class == gen1.target_class {
            return Err(Error::Config(
                "explainer pair needs one generator per target class".into(),
            ));
        }
        if gen0.dp != gen1.dp {
            return Err(Error::Config(
                "explainer pair mixes DP and non-DP generators".into(),
            ));
        }
        let (a, b) = if gen0.target_class == 0 {
            (gen0, gen1)
        } else {
            (gen1, gen0)
        };
        Ok(ExplainerPair { generators: [a, b] })
    }

    pub fn is_dp(&self) -> bool {
        self.generators[0].dp
    }

    pub fn generator_for_target(&self, target_class: u8) -> &GeneratorModel {
        &self.generators[target_class as usize]
    }

    /// Counterfactual for one input: the generator whose target class is
    /// `1 - argmax f(x)` produces the residual. A counterfactual that fails
    /// to flip the class is returned as-is; validity is a metric, not a
    /// contract.
    pub fn generate_cf(&self, classifier: &TrainedModel, x: &[f64]) -> Result<CFPair> {
        let fx = classifier.predict(x)?;
        let target = 1 - fx.argmax() as u8;
        let generator = self.generator_for_target(target);
        let r = generator.residual(x)?;
        let c: Vec<f64> = x.iter().zip(&r).map(|(a, b)| a + b).collect();
        let fc = classifier.predict(&c)?;
        Ok(CFPair {
            x: x.to_vec(),
            c,
            fx,
            fc,
        })
    }

    /// Dispatch a whole matrix of inputs at once; row i of the result is the
    /// counterfactual of row i.
    pub fn apply_batch(&self, classifier: &TrainedModel, x: &Array2<f64>) -> Result<Array2<f64>> {
        let classes = classifier.predict_classes(x)?;
        let mut out = x.clone();
        for target in 0..2u8 {
            let rows: Vec<usize> = classes
                .iter()
                .enumerate()
                .filter(|(_, &cls)| (1 - cls as u8) == target)
                .map(|(i, _)| i)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let sub = x.select(Axis(0), &rows);
            let cf = self.generator_for_target(target).apply(&sub)?;
            for (k, &i) in rows.iter().enumerate() {
                for j in 0..x.ncols() {
                    out[[i, j]] = cf[[k, j]];
                }
            }
        }
        Ok(out)
    }
}

/// Per-training diagnostics: warnings (e.g. mode collapse) plus sampled
/// loss traces.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub warnings: Vec<String>,
    pub d_losses: Vec<(usize, f64)>,
    pub g_losses: Vec<(usize, f64)>,
}

/// The two discriminator terms of the CounterGAN value function on a batch:
/// the classifier-weighted real term `sum_i w_i log D(x_i)` with
/// `w_i = C_t(x_i) / sum_j C_t(x_j)`, and the fake term
/// `(1/N) sum_i log(1 - D(x_i + G(x_i)))`.
pub fn countergan_value(
    discriminator: &DiscriminatorModel,
    generator: &GeneratorModel,
    classifier: &TrainedModel,
    batch: &Array2<f64>,
    target_class: u8,
) -> Result<(f64, f64)> {
    if batch.nrows() == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    let probs = classifier.forward_batch(batch)?;
    let weights: Vec<f64> = probs.column(target_class as usize).to_vec();
    let sum_w: f64 = weights.iter().sum();
    if sum_w <= LOG_FLOOR {
        return Err(Error::Data(
            "degenerate batch: classifier weights sum to zero".into(),
        ));
    }
    let s_real = discriminator.scores(batch)?;
    let d_real_term = weights
        .iter()
        .zip(&s_real)
        .map(|(w, s)| (w / sum_w) * clamped_ln(*s))
        .sum();

    let fakes = generator.apply(batch)?;
    let s_fake = discriminator.scores(&fakes)?;
    let d_fake_term =
        s_fake.iter().map(|s| clamped_ln(1.0 - s)).sum::<f64>() / batch.nrows() as f64;
    Ok((d_real_term, d_fake_term))
}

fn clamped_ln(v: f64) -> f64 {
    v.max(LOG_FLOOR).ln()
}

/// Train one residual generator steering toward `config.target_class`.
///
/// Alternating optimization: the discriminator ascends the value function,
/// the generator descends `-log D(x + G(x)) + lambda_cls * CE(f(x + G(x)),
/// target) + lambda_reg * mean |G(x)|`. With `config.dp` set, each generator
/// update is a DP-Adam step on per-example gradients.
pub fn train_countergan(
    classifier: &TrainedModel,
    train: &Dataset,
    config: &CounterGANConfig,
) -> Result<(GeneratorModel, TrainLog)> {
    config.validate()?;
    let d = train.n_features();
    if classifier.input_dim() != d {
        return Err(Error::Shape(
            "classifier and training data disagree on dimension".into(),
        ));
    }
    if classifier.spec.output_activation != OutputActivation::Softmax
        || classifier.spec.output_dim() != 2
    {
        return Err(Error::Config(
            "explainer needs a binary softmax classifier".into(),
        ));
    }

    let g_spec = config.generator_spec(d);
    let d_spec = config.discriminator_spec(d);
    let mut g_params = init_params(&g_spec)?;
    let mut d_params = init_params(&d_spec)?;

    let mut batch_rng = ChaCha8Rng::seed_from_u64(seeding::derive(config.seed, 0xB3));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seeding::derive(config.seed, 0xB4));

    let adam_g = AdamConfig::with_learning_rate(config.lr_g);
    let adam_d = AdamConfig::with_learning_rate(config.lr_d);
    let mut d_state = AdamState::new(&d_params);
    let mut g_state_plain = AdamState::new(&g_params);
    let mut g_state_dp = config.dp.as_ref().map(|dp| DpAdamState::new(&g_params, dp));

    let n = train.n_rows();
    let batch_size = config.batch_size.min(n);
    let target = config.target_class;
    let onehot_col = target as usize;
    let mut log = TrainLog::default();

    let probe_rows: Vec<usize> = (0..n.min(64)).collect();
    let probe = train.features.select(Axis(0), &probe_rows);
    let mut collapse_streak = 0usize;
    let mut collapse_reported = false;

    let mut indices: Vec<usize> = (0..n).collect();
    for step in 0..config.steps {
        // Draw a batch, resampling when the classifier gives the whole batch
        // zero weight for the target class (the value function normalizes by
        // that sum).
        let mut batch = None;
        let mut weights = Vec::new();
        let mut sum_w = 0.0;
        for _attempt in 0..=DEGENERATE_BATCH_RETRIES {
            indices.shuffle(&mut batch_rng);
            let chosen = &indices[..batch_size];
            let x = train.features.select(Axis(0), chosen);
            let probs = classifier.forward_batch(&x)?;
            weights = probs.column(onehot_col).to_vec();
            sum_w = weights.iter().sum();
            batch = Some(x);
            if sum_w > LOG_FLOOR {
                break;
            }
        }
        let x = batch.expect("batch drawn");
        let m = x.nrows();
        let use_real_term = sum_w > LOG_FLOOR;

        // --- Discriminator step: ascend the value function. ---
        let (residuals, _) = forward(&g_params, &g_spec, &x)?;
        let fakes = &x + &residuals;

        let (s_real, cache_real) = forward_train(&d_params, &d_spec, &x, &mut dropout_rng)?;
        let (s_fake, cache_fake) = forward_train(&d_params, &d_spec, &fakes, &mut dropout_rng)?;

        let mut d_loss = 0.0;
        let mut grad_real = Array2::zeros(s_real.raw_dim());
        if use_real_term {
            for i in 0..m {
                let w = weights[i] / sum_w;
                let s = s_real[[i, 0]];
                d_loss -= w * clamped_ln(s);
                grad_real[[i, 0]] = -w / s.max(LOG_FLOOR);
            }
        }
        let mut grad_fake = Array2::zeros(s_fake.raw_dim());
        for i in 0..m {
            let s = s_fake[[i, 0]];
            d_loss -= clamped_ln(1.0 - s) / m as f64;
            grad_fake[[i, 0]] = 1.0 / ((1.0 - s).max(LOG_FLOOR) * m as f64);
        }
        if !d_loss.is_finite() {
            return Err(Error::Training {
                epoch: step,
                msg: "discriminator loss diverged".into(),
            });
        }
        let (mut d_grads, _) = backward(&d_params, &d_spec, &cache_real, &grad_real)?;
        let (d_grads_fake, _) = backward(&d_params, &d_spec, &cache_fake, &grad_fake)?;
        d_grads.add_assign(&d_grads_fake);
        let (new_d, new_d_state) = adam_step(&d_params, &d_state, &d_grads, &adam_d)?;
        d_params = new_d;
        d_state = new_d_state;

        // --- Generator step: descend the composite loss. ---
        let (residuals, cache_g) = forward(&g_params, &g_spec, &x)?;
        let fakes = &x + &residuals;

        // Classifier term: mean CE toward the target class, gradient taken
        // back to the counterfactual inputs.
        let (pc, cache_cls) = forward(&classifier.params, &classifier.spec, &fakes)?;
        let mut grad_pc = Array2::zeros(pc.raw_dim());
        let mut cls_loss = 0.0;
        for i in 0..m {
            let p = pc[[i, onehot_col]];
            cls_loss -= clamped_ln(p) / m as f64;
            if p > LOG_FLOOR {
                grad_pc[[i, onehot_col]] = -1.0 / (p * m as f64);
            }
        }
        let (_, dc_cls) = backward(&classifier.params, &classifier.spec, &cache_cls, &grad_pc)?;

        // Adversarial term: mean -log D(c), gradient back to the inputs.
        let (s, cache_d) = forward(&d_params, &d_spec, &fakes)?;
        let mut grad_s = Array2::zeros(s.raw_dim());
        let mut adv_loss = 0.0;
        for i in 0..m {
            let sv = s[[i, 0]];
            adv_loss -= clamped_ln(sv) / m as f64;
            grad_s[[i, 0]] = -1.0 / (sv.max(LOG_FLOOR) * m as f64);
        }
        let (_, dc_adv) = backward(&d_params, &d_spec, &cache_d, &grad_s)?;

        // Residual penalty: lambda_reg * mean_i |r_i|_1.
        let reg_loss = config.lambda_reg
            * residuals.rows().into_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).sum::<f64>()
            / m as f64;

        let g_loss = adv_loss + config.lambda_cls * cls_loss + reg_loss;
        if !g_loss.is_finite() {
            return Err(Error::Training {
                epoch: step,
                msg: "generator loss diverged".into(),
            });
        }

        // dL/dr = dL/dc + lambda_reg * sign(r)/m  (c = x + r).
        let mut grad_r = &dc_adv + &dc_cls.mapv(|v| v * config.lambda_cls);
        grad_r.zip_mut_with(&residuals, |g, &r| {
            *g += config.lambda_reg * r.signum() / m as f64;
        });

        match (&config.dp, g_state_dp.as_mut()) {
            (Some(dp), Some(dp_state)) => {
                let (per_example, _) = backward_per_example(&g_params, &g_spec, &cache_g, &grad_r)?;
                let (new_g, new_state) =
                    dp_adam_step(&g_params, dp_state, &per_example, dp, &adam_g)?;
                g_params = new_g;
                *dp_state = new_state;
            }
            _ => {
                let (g_grads, _) = backward(&g_params, &g_spec, &cache_g, &grad_r)?;
                let (new_g, new_state) = adam_step(&g_params, &g_state_plain, &g_grads, &adam_g)?;
                g_params = new_g;
                g_state_plain = new_state;
            }
        }

        if step % 100 == 0 {
            log.d_losses.push((step, d_loss));
            log.g_losses.push((step, g_loss));
        }

        // Mode-collapse monitor over a fixed probe batch.
        let (probe_res, _) = forward(&g_params, &g_spec, &probe)?;
        let mean = probe_res.iter().sum::<f64>() / probe_res.len() as f64;
        let std = (probe_res.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / probe_res.len() as f64)
            .sqrt();
        if std < COLLAPSE_STD {
            collapse_streak += 1;
            if collapse_streak >= COLLAPSE_STEPS && !collapse_reported {
                log.warnings.push(format!(
                    "mode collapse: residual stdev {std:e} below {COLLAPSE_STD:e} for {COLLAPSE_STEPS} consecutive steps (step {step})"
                ));
                collapse_reported = true;
            }
        } else {
            collapse_streak = 0;
        }
    }

    let generator = GeneratorModel {
        model: TrainedModel {
            spec: g_spec,
            params: g_params,
            standardizer: Some(train.standardizer.clone()),
        },
        target_class: target,
        dp: config.dp.is_some(),
    };
    Ok((generator, log))
}

/// Train the per-class generator pair (target 0 and target 1) with seeds
/// derived per class from `config.seed`.
pub fn train_explainer_pair(
    classifier: &TrainedModel,
    train: &Dataset,
    config: &CounterGANConfig,
) -> Result<(ExplainerPair, TrainLog)> {
    let mut merged = TrainLog::default();
    let mut generators = Vec::with_capacity(2);
    for target in 0..2u8 {
        let cfg = CounterGANConfig {
            target_class: target,
            seed: seeding::derive(config.seed, 0xC0 + target as u64),
            dp: config.dp.map(|mut dp| {
                dp.seed = seeding::derive(dp.seed, 0xD0 + target as u64);
                dp
            }),
            ..config.clone()
        };
        let (generator, log) = train_countergan(classifier, train, &cfg)?;
        merged
            .warnings
            .extend(log.warnings.into_iter().map(|w| format!("target {target}: {w}")));
        generators.push(generator);
    }
    let gen1 = generators.pop().expect("two generators");
    let gen0 = generators.pop().expect("two generators");
    Ok((ExplainerPair::new(gen0, gen1)?, merged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic;
    use crate::models::build_threat_spec;
    use crate::nn::{train_classifier, TrainConfig};

    fn small_classifier(ds: &Dataset) -> TrainedModel {
        // The threat architecture is plenty for unit-level fixtures and much
        // cheaper than the 16-layer target.
        let spec = build_threat_spec(ds.n_features(), 3);
        let config = TrainConfig {
            epochs: 60,
            ..TrainConfig::default()
        };
        train_classifier(&spec, ds, &config).unwrap()
    }

    fn quick_config(steps: usize) -> CounterGANConfig {
        CounterGANConfig {
            steps,
            batch_size: 32,
            lr_g: 1e-3,
            lr_d: 1e-3,
            seed: 5,
            ..CounterGANConfig::default()
        }
    }

    #[test]
    fn constant_discriminator_gives_log_half_terms() {
        let ds = make_synthetic(64, 4, 3.0, 1).unwrap();
        let classifier = small_classifier(&ds);
        let config = quick_config(0);
        let d_spec = config.discriminator_spec(4);
        let g_spec = config.generator_spec(4);
        // Zero weights: sigmoid(0) = 0.5 everywhere, zero residuals.
        let discriminator = DiscriminatorModel {
            model: TrainedModel {
                params: init_params(&d_spec).unwrap().zeros_like(),
                spec: d_spec,
                standardizer: None,
            },
        };
        let generator = GeneratorModel {
            model: TrainedModel {
                params: init_params(&g_spec).unwrap().zeros_like(),
                spec: g_spec,
                standardizer: None,
            },
            target_class: 1,
            dp: false,
        };
        let batch = ds.features.slice(ndarray::s![..8, ..]).to_owned();
        let (real, fake) =
            countergan_value(&discriminator, &generator, &classifier, &batch, 1).unwrap();
        let ln_half = 0.5f64.ln();
        assert!((real - ln_half).abs() < 1e-9, "real {real}");
        assert!((fake - ln_half).abs() < 1e-9, "fake {fake}");
    }

    #[test]
    fn single_confident_example_reduces_to_log_d() {
        let ds = make_synthetic(64, 4, 6.0, 2).unwrap();
        let classifier = small_classifier(&ds);
        let config = quick_config(0);
        let discriminator = DiscriminatorModel {
            model: TrainedModel {
                params: init_params(&config.discriminator_spec(4)).unwrap(),
                spec: config.discriminator_spec(4),
                standardizer: None,
            },
        };
        let generator = GeneratorModel {
            model: TrainedModel {
                params: init_params(&config.generator_spec(4)).unwrap().zeros_like(),
                spec: config.generator_spec(4),
                standardizer: None,
            },
            target_class: 1,
            dp: false,
        };
        // One row: the normalized weight is exactly 1 regardless of C_t(x).
        let row = ds.features.slice(ndarray::s![..1, ..]).to_owned();
        let (real, _) = countergan_value(&discriminator, &generator, &classifier, &row, 1).unwrap();
        let s = discriminator.scores(&row).unwrap()[0];
        assert!((real - s.ln()).abs() < 1e-12);
    }

    #[test]
    fn value_terms_match_scalar_loop_oracle() {
        let ds = make_synthetic(64, 3, 3.0, 4).unwrap();
        let classifier = small_classifier(&ds);
        let config = quick_config(0);
        let discriminator = DiscriminatorModel {
            model: TrainedModel {
                params: init_params(&config.discriminator_spec(3)).unwrap(),
                spec: config.discriminator_spec(3),
                standardizer: None,
            },
        };
        let generator = GeneratorModel {
            model: TrainedModel {
                params: init_params(&config.generator_spec(3)).unwrap(),
                spec: config.generator_spec(3),
                standardizer: None,
            },
            target_class: 0,
            dp: false,
        };
        let batch = ds.features.slice(ndarray::s![..8, ..]).to_owned();
        let (real, fake) =
            countergan_value(&discriminator, &generator, &classifier, &batch, 0).unwrap();

        // Independent elementwise evaluation.
        let mut weights = Vec::new();
        for i in 0..8 {
            let p = classifier
                .predict(batch.row(i).as_slice().unwrap())
                .unwrap();
            weights.push(p.prob(0));
        }
        let sum_w: f64 = weights.iter().sum();
        let mut want_real = 0.0;
        let mut want_fake = 0.0;
        for i in 0..8 {
            let x = batch.row(i).to_vec();
            let s = discriminator
                .model
                .forward_batch(&Array2::from_shape_vec((1, 3), x.clone()).unwrap())
                .unwrap()[[0, 0]];
            want_real += weights[i] / sum_w * s.ln();
            let r = generator.residual(&x).unwrap();
            let c: Vec<f64> = x.iter().zip(&r).map(|(a, b)| a + b).collect();
            let sc = discriminator
                .model
                .forward_batch(&Array2::from_shape_vec((1, 3), c).unwrap())
                .unwrap()[[0, 0]];
            want_fake += (1.0 - sc).ln() / 8.0;
        }
        assert!((real - want_real).abs() < 1e-10);
        assert!((fake - want_fake).abs() < 1e-10);
    }

    #[test]
    fn zero_weight_generator_returns_input_unchanged() {
        let ds = make_synthetic(64, 4, 3.0, 7).unwrap();
        let classifier = small_classifier(&ds);
        let config = quick_config(0);
        let mk = |target| GeneratorModel {
            model: TrainedModel {
                params: init_params(&config.generator_spec(4)).unwrap().zeros_like(),
                spec: config.generator_spec(4),
                standardizer: None,
            },
            target_class: target,
            dp: false,
        };
        let pair = ExplainerPair::new(mk(0), mk(1)).unwrap();
        let x = ds.features.row(0).to_vec();
        let cf = pair.generate_cf(&classifier, &x).unwrap();
        assert_eq!(cf.c, cf.x);
        assert_eq!(cf.fx.probs(), cf.fc.probs());
    }

    #[test]
    fn dispatch_targets_the_opposite_class() {
        let ds = make_synthetic(200, 4, 3.0, 8).unwrap();
        let classifier = small_classifier(&ds);
        let config = quick_config(60);
        let (pair, _) = train_explainer_pair(&classifier, &ds, &config).unwrap();
        for i in 0..20 {
            let x = ds.features.row(i).to_vec();
            let fx = classifier.predict(&x).unwrap();
            let target = 1 - fx.argmax() as u8;
            let gen = pair.generator_for_target(target);
            assert_eq!(gen.target_class, target);
            assert_ne!(gen.target_class as usize, fx.argmax());
        }
    }

    #[test]
    fn residual_identity_holds_exactly() {
        let ds = make_synthetic(150, 3, 3.0, 6).unwrap();
        let classifier = small_classifier(&ds);
        let (pair, _) = train_explainer_pair(&classifier, &ds, &quick_config(40)).unwrap();
        for i in 0..10 {
            let x = ds.features.row(i).to_vec();
            let cf = pair.generate_cf(&classifier, &x).unwrap();
            let target = 1 - cf.fx.argmax() as u8;
            let r = pair.generator_for_target(target).residual(&x).unwrap();
            for j in 0..x.len() {
                assert_eq!(cf.c[j], x[j] + r[j], "coordinate {j}");
            }
        }
    }

    #[test]
    fn huge_regularization_crushes_residuals() {
        let ds = make_synthetic(200, 3, 3.0, 9).unwrap();
        let classifier = small_classifier(&ds);
        let config = CounterGANConfig {
            lambda_reg: 1e6,
            ..quick_config(300)
        };
        let (generator, _) = train_countergan(&classifier, &ds, &config).unwrap();
        let res = generator.residuals(&ds.features).unwrap();
        let mean_abs = res.iter().map(|v| v.abs()).sum::<f64>() / res.len() as f64;
        assert!(mean_abs < 1e-2, "mean |G(x)| = {mean_abs}");
    }

    #[test]
    fn dp_with_zero_noise_and_infinite_clip_matches_plain_training() {
        let ds = make_synthetic(120, 3, 3.0, 10).unwrap();
        let classifier = small_classifier(&ds);
        let base = quick_config(50);
        let dp_cfg = CounterGANConfig {
            dp: Some(DPConfig {
                l2_norm_clip: f64::INFINITY,
                noise_multiplier: 0.0,
                microbatch_size: 1,
                seed: 3,
            }),
            ..base.clone()
        };
        let (plain, _) = train_countergan(&classifier, &ds, &base).unwrap();
        let (dp, _) = train_countergan(&classifier, &ds, &dp_cfg).unwrap();
        let diff = plain.model.params.max_abs_diff(&dp.model.params);
        assert!(diff < 1e-9, "max parameter difference {diff}");
        assert!(dp.dp && !plain.dp);
    }

    #[test]
    fn pair_construction_rejects_mismatches() {
        let config = quick_config(0);
        let mk = |target, dp| GeneratorModel {
            model: TrainedModel {
                params: init_params(&config.generator_spec(3)).unwrap(),
                spec: config.generator_spec(3),
                standardizer: None,
            },
            target_class: target,
            dp,
        };
        assert!(ExplainerPair::new(mk(0, false), mk(0, false)).is_err());
        assert!(ExplainerPair::new(mk(0, false), mk(1, true)).is_err());
        assert!(ExplainerPair::new(mk(1, false), mk(0, false)).is_ok());
    }
}
