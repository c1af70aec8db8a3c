//! Train the defender's 16-hidden-layer gelu classifier on a synthetic
//! two-cluster dataset, checkpoint it, and verify the checkpoint reloads.
//!
//! ```bash
//! cargo run --release --example train_target
//! ```

use mealab::data::{make_synthetic, split, SplitSpec};
use mealab::models::build_target_spec;
use mealab::nn::{load_checkpoint, save_checkpoint, train_classifier, CheckpointMeta, TrainConfig};

fn main() -> mealab::Result<()> {
    let ds = make_synthetic(2000, 10, 3.0, 42)?;
    let (train, eval) = split(&ds, &SplitSpec::default())?;
    println!(
        "dataset: {} train rows, {} eval rows, {} features",
        train.n_rows(),
        eval.n_rows(),
        train.n_features()
    );

    let spec = build_target_spec(train.n_features(), 42);
    println!(
        "target architecture: {:?} ({} parameters)",
        spec.layer_sizes,
        spec.n_parameters()
    );

    let config = TrainConfig::default();
    let model = train_classifier(&spec, &train, &config)?;
    println!("train accuracy: {:.4}", model.accuracy(&train)?);
    println!("eval accuracy:  {:.4}", model.accuracy(&eval)?);

    let path = std::env::temp_dir().join("mealab_example_target.ckpt");
    save_checkpoint(&model, &CheckpointMeta::of_kind("classifier"), &path)?;
    let (reloaded, meta) = load_checkpoint(&path)?;
    println!(
        "checkpoint round trip ok: kind={:?}, eval accuracy {:.4} -> {}",
        meta.kind,
        reloaded.accuracy(&eval)?,
        path.display()
    );
    Ok(())
}
