//! Minimal dense-network engine: LeCun initialization, forward pass with
//! confidence-score outputs, exact backpropagation (batch and per-example),
//! Adam, cross-entropy / MSE training loops, and a self-describing
//! checkpoint format.
//!
//! Everything downstream (target, threat, generator, discriminator,
//! autoencoder) is built on this module. All arithmetic is in `f64` and every
//! training loop is single-threaded and deterministic under its seed.

mod activations;
mod adam;
mod checkpoint;
mod loss;
mod network;
mod train;

pub use activations::{gelu, gelu_derivative, relu, relu_derivative, sigmoid, softmax_rows};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_FORMAT};
pub use loss::{cross_entropy_loss, mse_loss};
pub use network::{
    backward, backward_from_logit_grad, backward_per_example, forward, forward_train,
    init_params, output_grad_to_logit_grad, ForwardCache, GradMode, HiddenActivation, InitScheme,
    LayerParams, MLPSpec, OutputActivation, ParameterSet, SoftPrediction,
};
pub use train::{train_classifier, TrainConfig, TrainedModel};
