//! Network description, parameters, forward pass and exact backpropagation.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::activations::{gelu, gelu_derivative, relu, relu_derivative, sigmoid, softmax_rows};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Gelu,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Softmax,
    Sigmoid,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    Lecun,
}

/// Shape and behaviour of a dense network: `layer_sizes` runs input dim,
/// hidden dims..., output dim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLPSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    /// Inverted-dropout rate applied after each hidden activation during
    /// training only; 0 disables it.
    pub dropout_after_hidden: f64,
    pub init: InitScheme,
    pub seed: u64,
}

impl MLPSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
        seed: u64,
    ) -> Self {
        MLPSpec {
            layer_sizes,
            hidden_activation,
            output_activation,
            dropout_after_hidden: 0.0,
            init: InitScheme::Lecun,
            seed,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("non-empty layer list")
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn n_parameters(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 3 {
            return Err(Error::Config(
                "network needs at least one hidden layer".into(),
            ));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if self.output_activation == OutputActivation::Softmax && self.output_dim() < 2 {
            return Err(Error::Config("softmax output needs width >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_after_hidden) {
            return Err(Error::Config("dropout must lie in [0,1)".into()));
        }
        Ok(())
    }
}

/// One dense layer: weights shaped `(fan_in, fan_out)`, bias `(fan_out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All weights and biases of a network. Gradients reuse this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub layers: Vec<LayerParams>,
}

impl ParameterSet {
    pub fn zeros_like(&self) -> ParameterSet {
        ParameterSet {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    /// L2 norm of the full parameter vector, flattened across all layers.
    pub fn l2_norm(&self) -> f64 {
        self.sum_of_squares().sqrt()
    }

    fn sum_of_squares(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weights.iter().map(|v| v * v).sum::<f64>()
                    + l.bias.iter().map(|v| v * v).sum::<f64>()
            })
            .sum()
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.mapv_inplace(|v| v * s);
            l.bias.mapv_inplace(|v| v * s);
        }
    }

    pub fn add_assign(&mut self, other: &ParameterSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    /// Largest absolute elementwise difference; shapes must match.
    pub fn max_abs_diff(&self, other: &ParameterSet) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, b) in self.layers.iter().zip(&other.layers) {
            for (x, y) in a.weights.iter().zip(b.weights.iter()) {
                worst = worst.max((x - y).abs());
            }
            for (x, y) in a.bias.iter().zip(b.bias.iter()) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }

    fn shape_signature(&self) -> Vec<usize> {
        let mut sig = Vec::with_capacity(self.layers.len() + 1);
        if let Some(first) = self.layers.first() {
            sig.push(first.weights.nrows());
        }
        for l in &self.layers {
            sig.push(l.weights.ncols());
        }
        sig
    }
}

/// Probability vector over classes — the service's confidence scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftPrediction {
    probs: Vec<f64>,
}

impl SoftPrediction {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Shape("empty probability vector".into()));
        }
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Numeric("probabilities must lie in [0,1]".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Numeric(format!(
                "probabilities must sum to 1, got {sum}"
            )));
        }
        Ok(SoftPrediction { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, class: usize) -> f64 {
        self.probs[class]
    }

    /// Index of the largest probability. Exact ties resolve to the lowest
    /// class index — the single tie-break rule used everywhere in this crate.
    pub fn argmax(&self) -> usize {
        argmax_row(&self.probs)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// First index of the maximal value; ties go to the lowest index.
pub(crate) fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// LeCun-initialized parameters: weights from N(0, 1/fan_in), biases zero,
/// deterministic under `spec.seed`.
pub fn init_params(spec: &MLPSpec) -> Result<ParameterSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut layers = Vec::with_capacity(spec.n_layers());
    for w in spec.layer_sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let dist = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("positive stddev");
        let weights = Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(&mut rng));
        layers.push(LayerParams {
            weights,
            bias: Array1::zeros(fan_out),
        });
    }
    Ok(ParameterSet { layers })
}

/// Everything backprop needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// a_0 = X.
    inputs: Array2<f64>,
    /// Pre-activations z_1..z_L.
    pre_activations: Vec<Array2<f64>>,
    /// Post-activation (and post-dropout) outputs a_1..a_L.
    activations: Vec<Array2<f64>>,
    /// Scaled inverted-dropout masks for hidden layers (entries 0 or 1/(1-p)).
    dropout_masks: Vec<Option<Array2<f64>>>,
    shape_signature: Vec<usize>,
}

impl ForwardCache {
    pub fn n_rows(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn outputs(&self) -> &Array2<f64> {
        self.activations.last().expect("at least one layer")
    }
}

/// Inference-mode forward pass (dropout disabled). For softmax networks each
/// output row is a probability vector summing to 1.
pub fn forward(
    params: &ParameterSet,
    spec: &MLPSpec,
    x: &Array2<f64>,
) -> Result<(Array2<f64>, ForwardCache)> {
    forward_impl(params, spec, x, None)
}

/// Training-mode forward pass; dropout masks are drawn from `rng` when
/// `spec.dropout_after_hidden > 0`.
pub fn forward_train(
    params: &ParameterSet,
    spec: &MLPSpec,
    x: &Array2<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<(Array2<f64>, ForwardCache)> {
    forward_impl(params, spec, x, Some(rng))
}

fn forward_impl(
    params: &ParameterSet,
    spec: &MLPSpec,
    x: &Array2<f64>,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(Array2<f64>, ForwardCache)> {
    if x.ncols() != spec.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} columns, network expects {}",
            x.ncols(),
            spec.input_dim()
        )));
    }
    if params.layers.len() != spec.n_layers() {
        return Err(Error::Shape("parameter/spec layer count mismatch".into()));
    }

    let n_layers = spec.n_layers();
    let mut pre_activations = Vec::with_capacity(n_layers);
    let mut activations: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
    let mut dropout_masks = Vec::with_capacity(n_layers);

    let mut current = x.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let z = current.dot(&layer.weights) + &layer.bias;
        let last = l + 1 == n_layers;
        let mut a = if last {
            match spec.output_activation {
                OutputActivation::Softmax => softmax_rows(&z),
                OutputActivation::Sigmoid => z.mapv(sigmoid),
                OutputActivation::Linear => z.clone(),
            }
        } else {
            match spec.hidden_activation {
                HiddenActivation::Gelu => z.mapv(gelu),
                HiddenActivation::Relu => z.mapv(relu),
            }
        };

        let mask = if !last && spec.dropout_after_hidden > 0.0 {
            match dropout_rng.as_deref_mut() {
                Some(rng) => {
                    let keep = 1.0 - spec.dropout_after_hidden;
                    let mask = Array2::from_shape_fn(a.raw_dim(), |_| {
                        if rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    a *= &mask;
                    Some(mask)
                }
                None => None,
            }
        } else {
            None
        };

        pre_activations.push(z);
        dropout_masks.push(mask);
        current = a.clone();
        activations.push(a);
    }

    let outputs = activations.last().expect("layers").clone();
    if outputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite activation in forward pass".into()));
    }
    let cache = ForwardCache {
        inputs: x.clone(),
        pre_activations,
        activations,
        dropout_masks,
        shape_signature: params.shape_signature(),
    };
    Ok((outputs, cache))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    Batch,
    PerExample,
}

/// Map `dL/d outputs` to `dL/d z_L` through the output activation.
pub fn output_grad_to_logit_grad(
    spec: &MLPSpec,
    outputs: &Array2<f64>,
    output_grad: &Array2<f64>,
) -> Array2<f64> {
    match spec.output_activation {
        OutputActivation::Linear => output_grad.clone(),
        OutputActivation::Sigmoid => {
            let mut delta = output_grad.clone();
            delta.zip_mut_with(outputs, |g, &s| *g *= s * (1.0 - s));
            delta
        }
        OutputActivation::Softmax => {
            let mut delta = Array2::zeros(output_grad.raw_dim());
            for i in 0..output_grad.nrows() {
                let p = outputs.row(i);
                let g = output_grad.row(i);
                let dot: f64 = g.iter().zip(p.iter()).map(|(a, b)| a * b).sum();
                for j in 0..p.len() {
                    delta[[i, j]] = p[j] * (g[j] - dot);
                }
            }
            delta
        }
    }
}

/// Batch backpropagation.
///
/// `output_grad` is the gradient of the scalar (already averaged) loss with
/// respect to the network outputs; the returned pair is (parameter gradients,
/// gradient with respect to the input rows).
pub fn backward(
    params: &ParameterSet,
    spec: &MLPSpec,
    cache: &ForwardCache,
    output_grad: &Array2<f64>,
) -> Result<(ParameterSet, Array2<f64>)> {
    let delta = output_grad_to_logit_grad(spec, cache.outputs(), output_grad);
    let (grads, input_grad) = backprop(params, spec, cache, &delta, GradMode::Batch)?;
    Ok((grads.into_iter().next().expect("batch gradient"), input_grad))
}

/// Batch backpropagation from a gradient with respect to the final
/// pre-activations (used by losses defined directly on logits, e.g. the
/// distillation loss with temperature softening).
pub fn backward_from_logit_grad(
    params: &ParameterSet,
    spec: &MLPSpec,
    cache: &ForwardCache,
    logit_grad: &Array2<f64>,
) -> Result<(ParameterSet, Array2<f64>)> {
    let (grads, input_grad) = backprop(params, spec, cache, logit_grad, GradMode::Batch)?;
    Ok((grads.into_iter().next().expect("batch gradient"), input_grad))
}

/// Per-example backpropagation: one `ParameterSet`-shaped gradient per row.
/// The mean of the per-example gradients equals the batch gradient, so each
/// entry is the gradient of that row's own (unaveraged) loss term.
pub fn backward_per_example(
    params: &ParameterSet,
    spec: &MLPSpec,
    cache: &ForwardCache,
    output_grad: &Array2<f64>,
) -> Result<(Vec<ParameterSet>, Array2<f64>)> {
    let delta = output_grad_to_logit_grad(spec, cache.outputs(), output_grad);
    backprop(params, spec, cache, &delta, GradMode::PerExample)
}

fn backprop(
    params: &ParameterSet,
    spec: &MLPSpec,
    cache: &ForwardCache,
    logit_grad: &Array2<f64>,
    mode: GradMode,
) -> Result<(Vec<ParameterSet>, Array2<f64>)> {
    if cache.shape_signature != params.shape_signature() {
        return Err(Error::Contract(
            "cache was produced by a different network shape".into(),
        ));
    }
    if logit_grad.raw_dim() != cache.outputs().raw_dim() {
        return Err(Error::Contract(
            "loss gradient shape does not match cached outputs".into(),
        ));
    }

    let m = cache.n_rows();
    let n_layers = params.layers.len();
    let mut delta = logit_grad.clone();

    // deltas[l] = dL/dz_{l+1}, computed from the top down.
    let mut deltas: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); n_layers];
    for l in (0..n_layers).rev() {
        deltas[l] = delta.clone();
        if l == 0 {
            break;
        }
        let mut upstream = delta.dot(&params.layers[l].weights.t());
        if let Some(mask) = &cache.dropout_masks[l - 1] {
            upstream *= mask;
        }
        let z_prev = &cache.pre_activations[l - 1];
        match spec.hidden_activation {
            HiddenActivation::Gelu => upstream.zip_mut_with(z_prev, |u, &z| *u *= gelu_derivative(z)),
            HiddenActivation::Relu => upstream.zip_mut_with(z_prev, |u, &z| *u *= relu_derivative(z)),
        }
        delta = upstream;
    }

    let input_grad = deltas[0].dot(&params.layers[0].weights.t());

    match mode {
        GradMode::Batch => {
            let mut layers = Vec::with_capacity(n_layers);
            for l in 0..n_layers {
                let a_prev = if l == 0 {
                    &cache.inputs
                } else {
                    &cache.activations[l - 1]
                };
                layers.push(LayerParams {
                    weights: a_prev.t().dot(&deltas[l]),
                    bias: deltas[l].sum_axis(Axis(0)),
                });
            }
            Ok((vec![ParameterSet { layers }], input_grad))
        }
        GradMode::PerExample => {
            let scale = m as f64;
            let mut grads = Vec::with_capacity(m);
            for i in 0..m {
                let mut layers = Vec::with_capacity(n_layers);
                for l in 0..n_layers {
                    let a_prev = if l == 0 {
                        cache.inputs.row(i)
                    } else {
                        cache.activations[l - 1].row(i)
                    };
                    let d = deltas[l].row(i);
                    let mut w = Array2::zeros((a_prev.len(), d.len()));
                    for (r, &av) in a_prev.iter().enumerate() {
                        for (c, &dv) in d.iter().enumerate() {
                            w[[r, c]] = scale * av * dv;
                        }
                    }
                    layers.push(LayerParams {
                        weights: w,
                        bias: d.mapv(|v| scale * v),
                    });
                }
                grads.push(ParameterSet { layers });
            }
            Ok((grads, input_grad))
        }
    }
}
