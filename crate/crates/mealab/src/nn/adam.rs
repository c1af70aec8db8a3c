//! Standard Adam with bias-corrected moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::network::ParameterSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(lr: f64) -> Self {
        AdamConfig {
            learning_rate: lr,
            ..AdamConfig::default()
        }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: ParameterSet,
    v: ParameterSet,
    step: u64,
}

impl AdamState {
    /// Zero moments, step counter 0.
    pub fn new(like: &ParameterSet) -> Self {
        AdamState {
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update. Returns the new parameters and the advanced state;
/// non-finite gradients are rejected.
pub fn adam_step(
    params: &ParameterSet,
    state: &AdamState,
    grads: &ParameterSet,
    config: &AdamConfig,
) -> Result<(ParameterSet, AdamState)> {
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient in adam_step".into()));
    }
    if grads.layers.len() != params.layers.len() {
        return Err(Error::Shape("gradient/parameter layer mismatch".into()));
    }

    let t = state.step + 1;
    let bc1 = 1.0 - config.beta1.powi(t as i32);
    let bc2 = 1.0 - config.beta2.powi(t as i32);

    let mut new_params = params.clone();
    let mut new_m = state.m.clone();
    let mut new_v = state.v.clone();
    for l in 0..params.layers.len() {
        update(
            new_params.layers[l].weights.iter_mut(),
            new_m.layers[l].weights.iter_mut(),
            new_v.layers[l].weights.iter_mut(),
            grads.layers[l].weights.iter(),
            config,
            bc1,
            bc2,
        );
        update(
            new_params.layers[l].bias.iter_mut(),
            new_m.layers[l].bias.iter_mut(),
            new_v.layers[l].bias.iter_mut(),
            grads.layers[l].bias.iter(),
            config,
            bc1,
            bc2,
        );
    }
    Ok((
        new_params,
        AdamState {
            m: new_m,
            v: new_v,
            step: t,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn update<'a>(
    params: impl Iterator<Item = &'a mut f64>,
    m: impl Iterator<Item = &'a mut f64>,
    v: impl Iterator<Item = &'a mut f64>,
    grads: impl Iterator<Item = &'a f64>,
    config: &AdamConfig,
    bc1: f64,
    bc2: f64,
) {
    for (((p, m), v), &g) in params.zip(m).zip(v).zip(grads) {
        *m = config.beta1 * *m + (1.0 - config.beta1) * g;
        *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, HiddenActivation, MLPSpec, OutputActivation};

    fn small_params() -> ParameterSet {
        let spec = MLPSpec::new(
            vec![3, 4, 2],
            HiddenActivation::Relu,
            OutputActivation::Softmax,
            9,
        );
        init_params(&spec).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let params = small_params();
        let state = AdamState::new(&params);
        let zeros = params.zeros_like();
        let (next, _) = adam_step(&params, &state, &zeros, &AdamConfig::default()).unwrap();
        assert_eq!(next, params);
    }

    #[test]
    fn identical_inputs_give_identical_outputs() {
        let params = small_params();
        let state = AdamState::new(&params);
        let mut grads = params.zeros_like();
        grads.layers[0].weights[[0, 0]] = 0.3;
        grads.layers[1].bias[0] = -0.1;
        let cfg = AdamConfig::default();
        let (a, sa) = adam_step(&params, &state, &grads, &cfg).unwrap();
        let (b, sb) = adam_step(&params, &state, &grads, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa.step, sb.step);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let params = small_params();
        let state = AdamState::new(&params);
        let mut grads = params.zeros_like();
        grads.layers[0].weights[[0, 0]] = f64::NAN;
        assert!(matches!(
            adam_step(&params, &state, &grads, &AdamConfig::default()),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn quadratic_converges_to_minimum() {
        // Scalar oracle: run the same recurrence on the 1-D loss (w-3)^2.
        let mut w = 0.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let cfg = AdamConfig::with_learning_rate(0.1);
        for t in 1..=500u32 {
            let g = 2.0 * (w - 3.0);
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t as i32));
            let v_hat = v / (1.0 - cfg.beta2.powi(t as i32));
            w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        assert!((w - 3.0).abs() < 1e-3, "scalar oracle ended at {w}");

        // The ParameterSet implementation must follow the same trajectory.
        let spec = MLPSpec::new(
            vec![1, 1, 1],
            HiddenActivation::Relu,
            OutputActivation::Linear,
            0,
        );
        let mut params = init_params(&spec).unwrap().zeros_like();
        let mut state = AdamState::new(&params);
        for _ in 0..500 {
            let mut grads = params.zeros_like();
            grads.layers[0].weights[[0, 0]] = 2.0 * (params.layers[0].weights[[0, 0]] - 3.0);
            let (p, s) = adam_step(&params, &state, &grads, &cfg).unwrap();
            params = p;
            state = s;
        }
        let got = params.layers[0].weights[[0, 0]];
        assert!((got - w).abs() < 1e-12, "engine {got} vs oracle {w}");
    }
}
