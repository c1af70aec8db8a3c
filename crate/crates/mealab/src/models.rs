//! Factory for the fixed experiment architectures: the deep gelu target, the
//! small relu threat network, and the denoising autoencoder used as a
//! realism scorer.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward, forward, forward_train, init_params, mse_loss, AdamState,
    HiddenActivation, MLPSpec, OutputActivation, TrainConfig, TrainedModel,
};

/// Hidden widths of the deployed target classifier, in order.
pub const TARGET_HIDDEN: [usize; 16] = [
    64, 32, 16, 32, 64, 128, 64, 32, 128, 64, 128, 64, 128, 64, 32, 16,
];

/// Hidden widths of the attacker's substitute network.
pub const THREAT_HIDDEN: [usize; 3] = [16, 32, 64];

/// Deep gelu classifier with a width-2 softmax head.
pub fn build_target_spec(d: usize, seed: u64) -> MLPSpec {
    let mut layers = Vec::with_capacity(TARGET_HIDDEN.len() + 2);
    layers.push(d);
    layers.extend_from_slice(&TARGET_HIDDEN);
    layers.push(2);
    MLPSpec::new(
        layers,
        HiddenActivation::Gelu,
        OutputActivation::Softmax,
        seed,
    )
}

/// Three-hidden-layer relu classifier with a width-2 softmax head.
pub fn build_threat_spec(d: usize, seed: u64) -> MLPSpec {
    let mut layers = Vec::with_capacity(THREAT_HIDDEN.len() + 2);
    layers.push(d);
    layers.extend_from_slice(&THREAT_HIDDEN);
    layers.push(2);
    MLPSpec::new(
        layers,
        HiddenActivation::Relu,
        OutputActivation::Softmax,
        seed,
    )
}

/// Symmetric bottleneck autoencoder: hidden `[d, ceil(d/2), d]` by default,
/// relu hidden activations, linear output of width `d`.
pub fn build_autoencoder_spec(d: usize, hidden: Option<Vec<usize>>, seed: u64) -> MLPSpec {
    let hidden = hidden.unwrap_or_else(|| vec![d, d.div_ceil(2), d]);
    let mut layers = Vec::with_capacity(hidden.len() + 2);
    layers.push(d);
    layers.extend(hidden);
    layers.push(d);
    MLPSpec::new(
        layers,
        HiddenActivation::Relu,
        OutputActivation::Linear,
        seed,
    )
}

/// Train a denoising autoencoder: Gaussian noise of `noise_std` is added to
/// the inputs afresh every epoch and the network minimizes MSE against the
/// clean rows. Early stopping (when enabled) monitors clean-input
/// reconstruction on a held-out slice.
pub fn train_denoising_autoencoder(
    train: &Dataset,
    noise_std: f64,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    train_denoising_autoencoder_with(
        build_autoencoder_spec(train.n_features(), None, config.seed),
        train,
        noise_std,
        config,
    )
}

pub fn train_denoising_autoencoder_with(
    spec: MLPSpec,
    train: &Dataset,
    noise_std: f64,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    spec.validate()?;
    if noise_std < 0.0 {
        return Err(Error::Config("noise_std must be nonnegative".into()));
    }
    if spec.input_dim() != train.n_features() || spec.output_dim() != train.n_features() {
        return Err(Error::Shape(
            "autoencoder input/output width must equal the feature count".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE)).expect("valid stddev");
    let mut params = init_params(&spec)?;

    let n = train.n_rows();
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let use_early_stop = config.early_stop_patience > 0 && config.validation_fraction > 0.0;
    let n_val = if use_early_stop {
        (((n as f64) * config.validation_fraction).ceil() as usize).min(n.saturating_sub(2))
    } else {
        0
    };
    let (val_idx, fit_idx) = order.split_at(n_val);
    let mut epoch_order = fit_idx.to_vec();
    let val_x = train.features.select(ndarray::Axis(0), val_idx);

    let adam_cfg = config.adam();
    let mut state = AdamState::new(&params);
    let mut best: Option<(f64, crate::nn::ParameterSet)> = None;
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        epoch_order.shuffle(&mut rng);
        for chunk in epoch_order.chunks(config.batch_size) {
            let clean = train.features.select(ndarray::Axis(0), chunk);
            let noised = if noise_std > 0.0 {
                let mut x = clean.clone();
                x.mapv_inplace(|v| v + noise.sample(&mut rng));
                x
            } else {
                clean.clone()
            };
            let (out, cache) = forward_train(&params, &spec, &noised, &mut rng)?;
            let (loss, grad) = mse_loss(&out, &clean)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    msg: "reconstruction loss diverged".into(),
                });
            }
            let (grads, _) = backward(&params, &spec, &cache, &grad)?;
            let (p, s) = adam_step(&params, &state, &grads, &adam_cfg)?;
            params = p;
            state = s;
        }

        if use_early_stop && n_val > 0 {
            let (out, _) = forward(&params, &spec, &val_x)?;
            let (val_loss, _) = mse_loss(&out, &val_x)?;
            let improved = best.as_ref().map(|(b, _)| val_loss < b - 1e-9).unwrap_or(true);
            if improved {
                best = Some((val_loss, params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.early_stop_patience {
                    break;
                }
            }
        }
    }
    if let Some((_, best_params)) = best {
        params = best_params;
    }
    Ok(TrainedModel {
        spec,
        params,
        standardizer: Some(train.standardizer.clone()),
    })
}

/// Reconstruction of each row (used by the realism metric).
pub fn reconstruct(autoencoder: &TrainedModel, x: &Array2<f64>) -> Result<Array2<f64>> {
    autoencoder.forward_batch(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_random_queries, make_synthetic};

    #[test]
    fn target_spec_pins_the_sixteen_layer_catalog() {
        let spec = build_target_spec(10, 0);
        assert_eq!(
            spec.layer_sizes,
            vec![10, 64, 32, 16, 32, 64, 128, 64, 32, 128, 64, 128, 64, 128, 64, 32, 16, 2]
        );
        assert_eq!(spec.hidden_activation, HiddenActivation::Gelu);
        assert_eq!(spec.output_activation, OutputActivation::Softmax);
        // d = 1 boundary still validates.
        assert!(build_target_spec(1, 0).validate().is_ok());
    }

    #[test]
    fn threat_spec_is_smaller_than_target() {
        for d in [1usize, 5, 10, 50] {
            let threat = build_threat_spec(d, 0);
            assert_eq!(threat.layer_sizes, vec![d, 16, 32, 64, 2]);
            assert_eq!(threat.hidden_activation, HiddenActivation::Relu);
            assert!(threat.n_parameters() < build_target_spec(d, 0).n_parameters());
        }
        let a = init_params(&build_threat_spec(4, 3)).unwrap();
        let b = init_params(&build_threat_spec(4, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn autoencoder_output_width_equals_input() {
        for d in [2usize, 7, 10] {
            let spec = build_autoencoder_spec(d, None, 0);
            assert_eq!(spec.input_dim(), d);
            assert_eq!(spec.output_dim(), d);
        }
    }

    #[test]
    fn autoencoder_memorizes_small_set_without_noise() {
        let ds = make_synthetic(50, 4, 2.0, 3).unwrap();
        let config = TrainConfig {
            epochs: 400,
            batch_size: 16,
            learning_rate: 3e-3,
            early_stop_patience: 0,
            ..TrainConfig::default()
        };
        let spec = build_autoencoder_spec(4, Some(vec![16, 8, 16]), config.seed);
        let ae = train_denoising_autoencoder_with(spec, &ds, 0.0, &config).unwrap();
        let recon = reconstruct(&ae, &ds.features).unwrap();
        let (mse, _) = mse_loss(&recon, &ds.features).unwrap();
        assert!(mse < 1e-2, "reconstruction mse {mse}");
    }

    #[test]
    fn in_distribution_reconstructs_better_than_random() {
        let ds = make_synthetic(400, 6, 3.0, 9).unwrap();
        let config = TrainConfig {
            epochs: 150,
            ..TrainConfig::default()
        };
        let ae = train_denoising_autoencoder(&ds, 0.1, &config).unwrap();

        let recon_in = reconstruct(&ae, &ds.features).unwrap();
        let (mse_in, _) = mse_loss(&recon_in, &ds.features).unwrap();
        let random = generate_random_queries(300, 6, -3.0, 3.0, 5).unwrap();
        let recon_rand = reconstruct(&ae, &random).unwrap();
        let (mse_rand, _) = mse_loss(&recon_rand, &random).unwrap();
        assert!(
            mse_in < mse_rand,
            "in-distribution {mse_in} should beat random {mse_rand}"
        );
    }

    #[test]
    fn autoencoder_training_is_deterministic() {
        let ds = make_synthetic(80, 3, 2.0, 4).unwrap();
        let config = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        let a = train_denoising_autoencoder(&ds, 0.1, &config).unwrap();
        let b = train_denoising_autoencoder(&ds, 0.1, &config).unwrap();
        assert_eq!(a.params, b.params);
    }
}
