//! Evaluation quantities: agreement between two models, prediction gain of a
//! counterfactual, autoencoder-based realism, and L1 actionability.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::reconstruct;
use crate::nn::TrainedModel;

/// Aggregated evaluation quantities for one batch of counterfactual pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub agreement: Option<f64>,
    pub mean_prediction_gain: f64,
    pub std_prediction_gain: f64,
    pub mean_actionability: f64,
    pub std_actionability: f64,
    pub mean_realism_queries: f64,
    pub std_realism_queries: f64,
    pub mean_realism_cfs: f64,
    pub std_realism_cfs: f64,
    pub count: usize,
}

/// Fraction of evaluation rows on which both models predict the same class
/// (argmax with ties to class 0). Symmetric in its two model arguments.
pub fn agreement(model_a: &TrainedModel, model_b: &TrainedModel, eval: &Dataset) -> Result<f64> {
    agreement_on(model_a, model_b, &eval.features)
}

/// Agreement over raw feature rows.
pub fn agreement_on(
    model_a: &TrainedModel,
    model_b: &TrainedModel,
    rows: &Array2<f64>,
) -> Result<f64> {
    if rows.nrows() == 0 {
        return Err(Error::Contract("agreement needs a non-empty set".into()));
    }
    let a = model_a.predict_classes(rows)?;
    let b = model_b.predict_classes(rows)?;
    let hits = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    Ok(hits as f64 / rows.nrows() as f64)
}

/// Probability shift toward the counterfactual's target class
/// `t = 1 - argmax f(x)`, clamped at 0 so the value spans `[0, 1]`.
pub fn prediction_gain(classifier: &TrainedModel, x: &[f64], c: &[f64]) -> Result<f64> {
    if x.len() != c.len() {
        return Err(Error::Shape("input/counterfactual dimension mismatch".into()));
    }
    let fx = classifier.predict(x)?;
    let fc = classifier.predict(c)?;
    let target = 1 - fx.argmax();
    Ok((fc.prob(target) - fx.prob(target)).max(0.0))
}

/// Per-row reconstruction error of the autoencoder, averaged over the `d`
/// coordinates: lower means the point fits the training distribution better.
/// Returns the per-row values and their mean.
pub fn realism(autoencoder: &TrainedModel, x: &Array2<f64>) -> Result<(Vec<f64>, f64)> {
    if x.ncols() != autoencoder.input_dim() {
        return Err(Error::Shape(format!(
            "autoencoder expects {} columns, got {}",
            autoencoder.input_dim(),
            x.ncols()
        )));
    }
    let recon = reconstruct(autoencoder, x)?;
    let d = x.ncols() as f64;
    let per_row: Vec<f64> = x
        .rows()
        .into_iter()
        .zip(recon.rows())
        .map(|(a, b)| {
            a.iter()
                .zip(b.iter())
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                / d
        })
        .collect();
    let mean = mean_of(&per_row);
    Ok((per_row, mean))
}

/// Per-row L1 distance between inputs and counterfactuals, plus the mean.
pub fn actionability(x: &Array2<f64>, c: &Array2<f64>) -> Result<(Vec<f64>, f64)> {
    if x.raw_dim() != c.raw_dim() {
        return Err(Error::Shape("actionability needs equal shapes".into()));
    }
    let per_row: Vec<f64> = x
        .rows()
        .into_iter()
        .zip(c.rows())
        .map(|(a, b)| a.iter().zip(b.iter()).map(|(u, v)| (u - v).abs()).sum())
        .collect();
    let mean = mean_of(&per_row);
    Ok((per_row, mean))
}

pub(crate) fn mean_of(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn std_of(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = mean_of(values);
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic;
    use crate::nn::{init_params, HiddenActivation, MLPSpec, OutputActivation, TrainedModel};
    use ndarray::array;

    fn random_model(seed: u64) -> TrainedModel {
        let spec = MLPSpec::new(
            vec![3, 6, 2],
            HiddenActivation::Relu,
            OutputActivation::Softmax,
            seed,
        );
        TrainedModel {
            params: init_params(&spec).unwrap(),
            spec,
            standardizer: None,
        }
    }

    /// Same network with its output columns swapped, so every non-tied
    /// prediction flips.
    fn class_swapped(model: &TrainedModel) -> TrainedModel {
        let mut params = model.params.clone();
        let last = params.layers.len() - 1;
        let w = params.layers[last].weights.clone();
        let b = params.layers[last].bias.clone();
        for r in 0..w.nrows() {
            params.layers[last].weights[[r, 0]] = w[[r, 1]];
            params.layers[last].weights[[r, 1]] = w[[r, 0]];
        }
        params.layers[last].bias[0] = b[1];
        params.layers[last].bias[1] = b[0];
        TrainedModel {
            spec: model.spec.clone(),
            params,
            standardizer: None,
        }
    }

    #[test]
    fn self_agreement_is_one() {
        let m = random_model(1);
        let ds = make_synthetic(50, 3, 2.0, 2).unwrap();
        assert_eq!(agreement(&m, &m, &ds).unwrap(), 1.0);
    }

    #[test]
    fn agreement_matches_brute_force_count_and_is_symmetric() {
        let a = random_model(1);
        let b = random_model(2);
        let ds = make_synthetic(20, 3, 1.0, 3).unwrap();
        let got = agreement(&a, &b, &ds).unwrap();

        // Independent row loop.
        let mut hits = 0usize;
        for row in ds.features.rows() {
            let pa = a.predict(row.as_slice().unwrap()).unwrap().argmax();
            let pb = b.predict(row.as_slice().unwrap()).unwrap().argmax();
            if pa == pb {
                hits += 1;
            }
        }
        assert_eq!(got, hits as f64 / 20.0);
        assert_eq!(got, agreement(&b, &a, &ds).unwrap());
    }

    #[test]
    fn swapped_classes_agree_nowhere() {
        let a = random_model(5);
        let b = class_swapped(&a);
        let ds = make_synthetic(40, 3, 2.0, 9).unwrap();
        assert_eq!(agreement(&a, &b, &ds).unwrap(), 0.0);
    }

    #[test]
    fn empty_eval_set_is_contract_error() {
        let a = random_model(1);
        let rows = Array2::zeros((0, 3));
        assert!(matches!(
            agreement_on(&a, &a, &rows),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn gain_is_zero_when_counterfactual_equals_input() {
        let m = random_model(3);
        let x = [0.2, -0.4, 1.0];
        assert_eq!(prediction_gain(&m, &x, &x).unwrap(), 0.0);
    }

    #[test]
    fn actionability_is_plain_l1() {
        let x = array![[1.0, 0.0, 2.0]];
        let c = array![[0.0, 1.0, 2.0]];
        let (rows, mean) = actionability(&x, &c).unwrap();
        assert_eq!(rows, vec![2.0]);
        assert_eq!(mean, 2.0);

        let same = actionability(&x, &x).unwrap();
        assert_eq!(same.1, 0.0);
    }

    #[test]
    fn actionability_matches_double_loop_oracle() {
        let x = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 3 + j) as f64).sin());
        let c = Array2::from_shape_fn((5, 3), |(i, j)| ((i + j * 7) as f64).cos());
        let (rows, mean) = actionability(&x, &c).unwrap();
        let mut oracle_rows = Vec::new();
        for i in 0..5 {
            let mut s = 0.0;
            for j in 0..3 {
                s += (x[[i, j]] - c[[i, j]]).abs();
            }
            oracle_rows.push(s);
        }
        for (a, b) in rows.iter().zip(&oracle_rows) {
            assert!((a - b).abs() <= 1e-12);
        }
        let oracle_mean = oracle_rows.iter().sum::<f64>() / 5.0;
        assert!((mean - oracle_mean).abs() <= 1e-12);
    }

    #[test]
    fn actionability_triangle_bound() {
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64) - (j as f64));
        let c = Array2::from_shape_fn((4, 3), |(i, j)| (j as f64) * 0.5 - (i as f64));
        let m = Array2::from_shape_fn((4, 3), |(i, j)| ((i * j) as f64).sqrt());
        let (xc, _) = actionability(&x, &c).unwrap();
        let (xm, _) = actionability(&x, &m).unwrap();
        let (mc, _) = actionability(&m, &c).unwrap();
        for i in 0..4 {
            assert!(xc[i] <= xm[i] + mc[i] + 1e-12);
        }
    }

    #[test]
    fn realism_shape_mismatch_is_error() {
        let ae = {
            let spec = MLPSpec::new(
                vec![3, 3, 3],
                HiddenActivation::Relu,
                OutputActivation::Linear,
                0,
            );
            TrainedModel {
                params: init_params(&spec).unwrap(),
                spec,
                standardizer: None,
            }
        };
        let x = Array2::zeros((2, 4));
        assert!(matches!(realism(&ae, &x), Err(Error::Shape(_))));
    }

    #[test]
    fn identity_autoencoder_scores_zero() {
        // Hand-built identity map: relu hidden passes positives through.
        let spec = MLPSpec::new(
            vec![2, 2, 2],
            HiddenActivation::Relu,
            OutputActivation::Linear,
            0,
        );
        let mut params = init_params(&spec).unwrap().zeros_like();
        params.layers[0].weights = array![[1.0, 0.0], [0.0, 1.0]];
        params.layers[1].weights = array![[1.0, 0.0], [0.0, 1.0]];
        let ae = TrainedModel {
            spec,
            params,
            standardizer: None,
        };
        let x = array![[0.5, 1.5], [2.0, 0.25]];
        let (rows, mean) = realism(&ae, &x).unwrap();
        assert!(rows.iter().all(|&r| r == 0.0));
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn realism_is_row_order_invariant() {
        let ae = {
            let spec = MLPSpec::new(
                vec![3, 4, 3],
                HiddenActivation::Relu,
                OutputActivation::Linear,
                4,
            );
            TrainedModel {
                params: init_params(&spec).unwrap(),
                spec,
                standardizer: None,
            }
        };
        let x = Array2::from_shape_fn((6, 3), |(i, j)| ((i + j) as f64).sin());
        let reversed = {
            let rows: Vec<usize> = (0..6).rev().collect();
            x.select(ndarray::Axis(0), &rows)
        };
        let (_, mean_a) = realism(&ae, &x).unwrap();
        let (_, mean_b) = realism(&ae, &reversed).unwrap();
        assert!((mean_a - mean_b).abs() < 1e-12);
    }

}
