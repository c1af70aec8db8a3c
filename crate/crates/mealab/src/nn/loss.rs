//! Scalar losses with gradients taken with respect to the network outputs.
//!
//! Every function returns the mean loss over the batch together with the
//! gradient of that mean, so the 1/m factor is already folded in.

use ndarray::Array2;

use crate::error::{Error, Result};

pub(crate) const PROB_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of the labelled class, probabilities clamped
/// to `[1e-12, 1]` inside the log.
pub fn cross_entropy_loss(probs: &Array2<f64>, labels: &[u8]) -> Result<(f64, Array2<f64>)> {
    if probs.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probability rows vs {} labels",
            probs.nrows(),
            labels.len()
        )));
    }
    let m = probs.nrows() as f64;
    let mut grad = Array2::zeros(probs.raw_dim());
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let y = label as usize;
        if y >= probs.ncols() {
            return Err(Error::Shape(format!(
                "label {y} out of range for {} classes",
                probs.ncols()
            )));
        }
        let p = probs[[i, y]];
        total += -p.clamp(PROB_FLOOR, 1.0).ln();
        if p > PROB_FLOOR {
            grad[[i, y]] = -1.0 / (p * m);
        }
    }
    Ok((total / m, grad))
}

/// Mean squared error over every entry of the batch.
pub fn mse_loss(outputs: &Array2<f64>, targets: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    if outputs.raw_dim() != targets.raw_dim() {
        return Err(Error::Shape("output/target shape mismatch".into()));
    }
    let n = outputs.len() as f64;
    let mut grad = Array2::zeros(outputs.raw_dim());
    let mut total = 0.0;
    for ((g, &o), &t) in grad.iter_mut().zip(outputs.iter()).zip(targets.iter()) {
        let d = o - t;
        total += d * d;
        *g = 2.0 * d / n;
    }
    Ok((total / n, grad))
}
