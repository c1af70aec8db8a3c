//! Self-describing model checkpoints.
//!
//! A checkpoint is a JSON document carrying the network spec, every layer's
//! explicitly-shaped weight matrix and bias vector, optional metadata, and a
//! probe batch with its saved outputs. Loading re-runs the probe and rejects
//! the file unless the outputs are reproduced within 1e-9.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::network::forward;
use super::train::TrainedModel;

pub const CHECKPOINT_FORMAT: &str = "mealab-checkpoint-v1";

const PROBE_ROWS: usize = 8;
const PROBE_SEED: u64 = 0x50524f4245; // "PROBE"
const PROBE_TOLERANCE: f64 = 1e-9;

/// Role annotations stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// What the network is: `classifier`, `generator`, `discriminator`,
    /// `autoencoder`, ...
    pub kind: String,
    /// For counterfactual generators: the class the generator steers toward.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_class: Option<u8>,
    /// For counterfactual generators: whether training was differentially
    /// private.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dp: Option<bool>,
}

impl CheckpointMeta {
    pub fn of_kind(kind: &str) -> Self {
        CheckpointMeta {
            kind: kind.to_string(),
            ..CheckpointMeta::default()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    model: TrainedModel,
    meta: CheckpointMeta,
    probe_inputs: Array2<f64>,
    probe_outputs: Array2<f64>,
}

pub fn save_checkpoint(model: &TrainedModel, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let probe_inputs = probe_batch(model.spec.input_dim());
    let (probe_outputs, _) = forward(&model.params, &model.spec, &probe_inputs)?;
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        model: model.clone(),
        meta: meta.clone(),
        probe_inputs,
        probe_outputs,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let f = fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(f), &file)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(TrainedModel, CheckpointMeta)> {
    let f = fs::File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let file: CheckpointFile = serde_json::from_reader(std::io::BufReader::new(f))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Input(format!(
            "unsupported checkpoint format {:?}",
            file.format
        )));
    }
    let (out, _) = forward(&file.model.params, &file.model.spec, &file.probe_inputs)?;
    let worst = out
        .iter()
        .zip(file.probe_outputs.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if worst > PROBE_TOLERANCE {
        return Err(Error::Data(format!(
            "checkpoint probe mismatch: max deviation {worst:e}"
        )));
    }
    Ok((file.model, file.meta))
}

fn probe_batch(d: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let dist = Uniform::new_inclusive(-2.0, 2.0);
    Array2::from_shape_fn((PROBE_ROWS, d), |_| dist.sample(&mut rng))
}
