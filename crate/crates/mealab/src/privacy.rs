//! Differentially-private optimization primitive: per-example gradient
//! clipping, calibrated Gaussian noise on the summed gradient, averaging,
//! then a standard Adam update.
//!
//! The mechanism exposes its parameters (clip norm `C`, noise multiplier
//! `sigma`) so run metadata can record them; no privacy accountant is
//! attached, so no (epsilon, delta) is reported.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, AdamState, ParameterSet};

/// DP-Adam parameters. `l2_norm_clip = f64::INFINITY` together with
/// `noise_multiplier = 0` degenerates the mechanism to plain Adam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DPConfig {
    pub l2_norm_clip: f64,
    pub noise_multiplier: f64,
    /// Number of examples averaged before clipping; 1 is true per-example
    /// clipping.
    pub microbatch_size: usize,
    pub seed: u64,
}

impl Default for DPConfig {
    fn default() -> Self {
        DPConfig {
            l2_norm_clip: 1.0,
            noise_multiplier: 3.0,
            microbatch_size: 1,
            seed: 0,
        }
    }
}

impl DPConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_norm_clip > 0.0) {
            return Err(Error::Config("l2_norm_clip must be positive".into()));
        }
        if self.noise_multiplier < 0.0 {
            return Err(Error::Config("noise_multiplier must be nonnegative".into()));
        }
        if self.noise_multiplier > 0.0 && self.l2_norm_clip.is_infinite() {
            return Err(Error::Config(
                "noise calibration needs a finite l2_norm_clip".into(),
            ));
        }
        if self.microbatch_size == 0 {
            return Err(Error::Config("microbatch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Optimizer state for DP-Adam: the Adam moments plus the noise stream,
/// which is seeded from `DPConfig::seed` and independent of every other
/// random source in a training run.
#[derive(Debug, Clone)]
pub struct DpAdamState {
    adam: AdamState,
    noise_rng: ChaCha8Rng,
}

impl DpAdamState {
    pub fn new(like: &ParameterSet, dp: &DPConfig) -> Self {
        DpAdamState {
            adam: AdamState::new(like),
            noise_rng: ChaCha8Rng::seed_from_u64(dp.seed),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.adam.step_count()
    }
}

/// Rescale each example's flattened gradient to norm at most `clip`;
/// gradients already under the bound are untouched.
pub fn clip_per_example(grads: &mut [ParameterSet], clip: f64) -> Result<()> {
    if !(clip > 0.0) {
        return Err(Error::Config("clip must be positive".into()));
    }
    if clip.is_infinite() {
        return Ok(());
    }
    for g in grads.iter_mut() {
        let norm = g.l2_norm();
        if norm > clip {
            g.scale_in_place(clip / norm);
        }
    }
    Ok(())
}

/// Clip, sum, noise, average: the gradient actually fed to Adam.
///
/// Independent Gaussian noise with standard deviation
/// `noise_multiplier * l2_norm_clip` is added to every coordinate of the
/// clipped sum before dividing by the example count.
pub fn dp_average_gradient(
    per_example_grads: &[ParameterSet],
    dp: &DPConfig,
    noise_rng: &mut ChaCha8Rng,
) -> Result<ParameterSet> {
    dp.validate()?;
    if per_example_grads.is_empty() {
        return Err(Error::Contract("empty per-example gradient list".into()));
    }
    for g in per_example_grads {
        if !g.is_finite() {
            return Err(Error::Numeric("non-finite per-example gradient".into()));
        }
    }

    // Microbatches of size > 1 are averaged before clipping.
    let units: Vec<ParameterSet> = if dp.microbatch_size == 1 {
        per_example_grads.to_vec()
    } else {
        per_example_grads
            .chunks(dp.microbatch_size)
            .map(|chunk| {
                let mut acc = chunk[0].zeros_like();
                for g in chunk {
                    acc.add_assign(g);
                }
                acc.scale_in_place(1.0 / chunk.len() as f64);
                acc
            })
            .collect()
    };

    let mut clipped = units;
    clip_per_example(&mut clipped, dp.l2_norm_clip)?;

    let mut sum = clipped[0].zeros_like();
    for g in &clipped {
        sum.add_assign(g);
    }

    if dp.noise_multiplier > 0.0 {
        let stddev = dp.noise_multiplier * dp.l2_norm_clip;
        let dist = Normal::new(0.0, stddev).expect("positive stddev");
        for layer in &mut sum.layers {
            layer.weights.mapv_inplace(|v| v + dist.sample(noise_rng));
            layer.bias.mapv_inplace(|v| v + dist.sample(noise_rng));
        }
    }

    sum.scale_in_place(1.0 / clipped.len() as f64);
    Ok(sum)
}

/// One DP-Adam update from per-example gradients.
pub fn dp_adam_step(
    params: &ParameterSet,
    state: &DpAdamState,
    per_example_grads: &[ParameterSet],
    dp: &DPConfig,
    adam_config: &AdamConfig,
) -> Result<(ParameterSet, DpAdamState)> {
    let mut noise_rng = state.noise_rng.clone();
    let grad = dp_average_gradient(per_example_grads, dp, &mut noise_rng)?;
    let (new_params, new_adam) = adam_step(params, &state.adam, &grad, adam_config)?;
    Ok((
        new_params,
        DpAdamState {
            adam: new_adam,
            noise_rng,
        },
    ))
}
