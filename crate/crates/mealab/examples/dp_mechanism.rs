//! The DP-Adam building blocks in isolation: per-example clipping, noise
//! calibration on the averaged gradient, and the degenerate configuration
//! that reproduces plain Adam.
//!
//! ```bash
//! cargo run --release --example dp_mechanism
//! ```

use mealab::nn::{init_params, HiddenActivation, MLPSpec, OutputActivation, ParameterSet};
use mealab::privacy::{clip_per_example, dp_average_gradient, DPConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mealab::Result<()> {
    let spec = MLPSpec::new(
        vec![4, 8, 2],
        HiddenActivation::Relu,
        OutputActivation::Softmax,
        0,
    );
    let shape = init_params(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut random_grad = |scale: f64| -> ParameterSet {
        let mut g = shape.zeros_like();
        for layer in &mut g.layers {
            layer.weights.mapv_inplace(|_| rng.gen_range(-scale..scale));
            layer.bias.mapv_inplace(|_| rng.gen_range(-scale..scale));
        }
        g
    };

    // Clipping: norms above the bound rescale onto it, others pass through.
    let mut grads: Vec<ParameterSet> = (0..6).map(|i| random_grad(0.2 + i as f64 * 0.2)).collect();
    println!("pre-clip norms:  {:?}", norms(&grads));
    clip_per_example(&mut grads, 1.0)?;
    println!("post-clip norms: {:?}", norms(&grads));

    // Noise calibration: with zero gradients the averaged gradient is pure
    // noise with stdev sigma * clip / batch.
    let dp = DPConfig {
        l2_norm_clip: 1.0,
        noise_multiplier: 3.0,
        microbatch_size: 1,
        seed: 7,
    };
    let batch = 64usize;
    let zeros: Vec<ParameterSet> = (0..batch).map(|_| shape.zeros_like()).collect();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(dp.seed);
    let mut samples = Vec::new();
    for _ in 0..2000 {
        let g = dp_average_gradient(&zeros, &dp, &mut noise_rng)?;
        samples.push(g.layers[0].weights[[0, 0]]);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let std = (samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / samples.len() as f64)
        .sqrt();
    println!(
        "noise on averaged gradient: empirical stdev {:.5}, expected sigma*C/batch = {:.5}",
        std,
        dp.noise_multiplier * dp.l2_norm_clip / batch as f64
    );

    // sigma = 0 with infinite clip degenerates to the plain average.
    let degenerate = DPConfig {
        l2_norm_clip: f64::INFINITY,
        noise_multiplier: 0.0,
        microbatch_size: 1,
        seed: 0,
    };
    let gs: Vec<ParameterSet> = (0..4).map(|_| random_grad(0.5)).collect();
    let avg = dp_average_gradient(&gs, &degenerate, &mut noise_rng)?;
    let mut want = gs[0].zeros_like();
    for g in &gs {
        want.add_assign(g);
    }
    want.scale_in_place(0.25);
    println!(
        "degenerate mechanism max |dp - plain| = {:.3e}",
        avg.max_abs_diff(&want)
    );
    Ok(())
}

fn norms(grads: &[ParameterSet]) -> Vec<f64> {
    grads.iter().map(|g| (g.l2_norm() * 1000.0).round() / 1000.0).collect()
}
