//! Train the CounteRGAN explainer pair and inspect a few counterfactuals:
//! does the residual flip the classifier, and how far does it move the point?
//!
//! ```bash
//! cargo run --release --example counterfactuals
//! ```

use mealab::data::{make_synthetic, split, SplitSpec};
use mealab::explainer::{train_explainer_pair, CounterGANConfig};
use mealab::metrics::{actionability, prediction_gain};
use mealab::models::build_target_spec;
use mealab::nn::{train_classifier, TrainConfig};
use ndarray::Axis;

fn main() -> mealab::Result<()> {
    let ds = make_synthetic(2000, 10, 3.0, 7)?;
    let (train, eval) = split(&ds, &SplitSpec::default())?;
    let target = train_classifier(
        &build_target_spec(train.n_features(), 7),
        &train,
        &TrainConfig::default(),
    )?;
    println!("classifier eval accuracy: {:.4}", target.accuracy(&eval)?);

    let config = CounterGANConfig {
        seed: 7,
        ..CounterGANConfig::default()
    };
    println!(
        "training generator pair ({} steps per class)...",
        config.steps
    );
    let (pair, log) = train_explainer_pair(&target, &train, &config)?;
    for warning in &log.warnings {
        println!("warning: {warning}");
    }

    let probe = eval.features.select(Axis(0), &(0..200).collect::<Vec<_>>());
    let mut flips = 0usize;
    for i in 0..probe.nrows() {
        let x = probe.row(i).to_vec();
        let cf = pair.generate_cf(&target, &x)?;
        if cf.fc.argmax() != cf.fx.argmax() {
            flips += 1;
        }
        if i < 5 {
            let gain = prediction_gain(&target, &cf.x, &cf.c)?;
            let (l1, _) = actionability(
                &ndarray::Array2::from_shape_vec((1, x.len()), cf.x.clone()).unwrap(),
                &ndarray::Array2::from_shape_vec((1, x.len()), cf.c.clone()).unwrap(),
            )?;
            println!(
                "point {i}: class {} -> {} | gain {:.3} | L1 change {:.3}",
                cf.fx.argmax(),
                cf.fc.argmax(),
                gain,
                l1[0]
            );
        }
    }
    println!(
        "flip rate over {} held-out points: {:.3}",
        probe.nrows(),
        flips as f64 / probe.nrows() as f64
    );
    Ok(())
}
