//! The attacker: collect a corpus through the black-box boundary, then train
//! the substitute model either directly on hard labels or by knowledge
//! distillation with a Jensen-Shannon distillation term.
//!
//! The attacker never sees ground-truth dataset labels: an [`AttackDataset`]
//! is populated from service responses only (the perfect-knowledge
//! constructor used to compute upper bounds is explicitly labelled as such).
//! Direct training is the `alpha = 1` special case of the distillation loss
//! and runs through the same loop, so the two coincide exactly when
//! `alpha = 1` with identical seeds and data ordering.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward_from_logit_grad, forward, forward_train, init_params, AdamState, MLPSpec,
    ParameterSet, TrainConfig, TrainedModel,
};
use crate::service::Service;

const LOG_FLOOR: f64 = 1e-12;
/// Share of the attack corpus held out to monitor agreement convergence.
const VALIDATION_FRACTION: f64 = 0.2;
/// Minimum validation-agreement improvement that counts as progress.
const MIN_AGREEMENT_IMPROVEMENT: f64 = 1e-3;

/// Where a corpus row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Query,
    Counterfactual,
}

/// The attacker's accumulated corpus: inputs with the service's soft labels.
#[derive(Debug, Clone)]
pub struct AttackDataset {
    inputs: Array2<f64>,
    soft_labels: Array2<f64>,
    provenance: Vec<Provenance>,
}

impl AttackDataset {
    fn from_rows(
        rows: Vec<Vec<f64>>,
        labels: Vec<Vec<f64>>,
        provenance: Vec<Provenance>,
    ) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let k = labels.first().map(|l| l.len()).unwrap_or(2);
        let mut inputs = Array2::zeros((n, d));
        let mut soft = Array2::zeros((n, k));
        for (i, (row, label)) in rows.into_iter().zip(labels).enumerate() {
            if row.len() != d || label.len() != k {
                return Err(Error::Shape("ragged attack corpus".into()));
            }
            for (j, v) in row.into_iter().enumerate() {
                inputs[[i, j]] = v;
            }
            for (j, v) in label.into_iter().enumerate() {
                soft[[i, j]] = v;
            }
        }
        Ok(AttackDataset {
            inputs,
            soft_labels: soft,
            provenance,
        })
    }

    /// Perfect-knowledge corpus: one-hot labels from a labelled dataset.
    /// This bypasses the service boundary on purpose — it exists to compute
    /// the upper bound an attacker with the defender's own data would reach.
    pub fn from_labeled_dataset(ds: &Dataset) -> Self {
        let n = ds.n_rows();
        let mut soft = Array2::zeros((n, 2));
        for (i, &l) in ds.labels.iter().enumerate() {
            soft[[i, l as usize]] = 1.0;
        }
        AttackDataset {
            inputs: ds.features.clone(),
            soft_labels: soft,
            provenance: vec![Provenance::Query; n],
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn soft_labels(&self) -> &Array2<f64> {
        &self.soft_labels
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Argmax of each soft label (ties to class 0).
    pub fn hard_labels(&self) -> Vec<u8> {
        self.soft_labels
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0usize;
                for (j, &v) in r.iter().enumerate().skip(1) {
                    if v > r[best] {
                        best = j;
                    }
                }
                best as u8
            })
            .collect()
    }

    pub fn count_by_provenance(&self, tag: Provenance) -> usize {
        self.provenance.iter().filter(|&&p| p == tag).count()
    }

    /// Persist as a directory in the same shape as a dataset: `schema.json`
    /// plus `data.csv` with feature, soft-label and provenance columns.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let schema = serde_json::json!({
            "format": ATTACK_DATASET_FORMAT,
            "n_rows": self.len(),
            "n_features": self.dim(),
            "n_classes": self.soft_labels.ncols(),
        });
        fs::write(
            dir.join("schema.json"),
            serde_json::to_string_pretty(&schema)?,
        )?;
        let mut w = csv::Writer::from_path(dir.join("data.csv"))?;
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("f{j}")).collect();
        header.extend((0..self.soft_labels.ncols()).map(|k| format!("p{k}")));
        header.push("provenance".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self
                .inputs
                .row(i)
                .iter()
                .map(|v| format!("{v:.17e}"))
                .collect();
            rec.extend(self.soft_labels.row(i).iter().map(|v| format!("{v:.17e}")));
            rec.push(
                match self.provenance[i] {
                    Provenance::Query => "query",
                    Provenance::Counterfactual => "counterfactual",
                }
                .into(),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let schema: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.join("schema.json"))
                .map_err(|e| Error::Input(format!("{}: {e}", dir.display())))?,
        )?;
        if schema["format"] != ATTACK_DATASET_FORMAT {
            return Err(Error::Input("unsupported attack-dataset format".into()));
        }
        let d = schema["n_features"].as_u64().unwrap_or(0) as usize;
        let k = schema["n_classes"].as_u64().unwrap_or(2) as usize;
        let mut reader = csv::Reader::from_path(dir.join("data.csv"))?;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut provenance = Vec::new();
        for record in reader.records() {
            let record = record?;
            let cells: Vec<&str> = record.iter().collect();
            if cells.len() != d + k + 1 {
                return Err(Error::Input("attack data column mismatch".into()));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Input(format!("bad number {s:?}: {e}")))
            };
            rows.push(cells[..d].iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?);
            labels.push(
                cells[d..d + k]
                    .iter()
                    .map(|s| parse(s))
                    .collect::<Result<Vec<_>>>()?,
            );
            provenance.push(match cells[d + k] {
                "query" => Provenance::Query,
                "counterfactual" => Provenance::Counterfactual,
                other => return Err(Error::Input(format!("bad provenance {other:?}"))),
            });
        }
        AttackDataset::from_rows(rows, labels, provenance)
    }
}

pub(crate) const ATTACK_DATASET_FORMAT: &str = "mealab-attack-dataset-v1";

/// Knowledge-distillation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KDConfig {
    /// Weight of the hard-label cross-entropy term; `1 - alpha` weights the
    /// distillation term.
    pub alpha: f64,
    pub temperature: f64,
    pub alpha_sweep: Vec<f64>,
}

impl Default for KDConfig {
    fn default() -> Self {
        KDConfig {
            alpha: 0.3,
            temperature: 1.0,
            alpha_sweep: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

impl KDConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("alpha must lie in [0,1]".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if self
            .alpha_sweep
            .iter()
            .any(|a| !(0.0..=1.0).contains(a))
        {
            return Err(Error::Config("alpha_sweep values must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// Issue exactly `budget` queries (the first `budget` pool rows) and collect
/// the responses. In counterfactual scenarios each query contributes the
/// query row plus a counterfactual row; when the service withholds `f(c)`,
/// the counterfactual row is labelled one-hot with the class opposite to
/// `argmax f(x)`.
pub fn collect(service: &Service, query_pool: &Array2<f64>, budget: usize) -> Result<AttackDataset> {
    if budget > query_pool.nrows() {
        return Err(Error::Contract(format!(
            "budget {budget} exceeds pool of {} rows",
            query_pool.nrows()
        )));
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut provenance = Vec::new();
    for i in 0..budget {
        let x = query_pool.row(i).to_vec();
        let resp = service.query(&x)?;
        let fx = resp.prediction;
        rows.push(x);
        labels.push(fx.probs().to_vec());
        provenance.push(Provenance::Query);
        if let Some(c) = resp.cf {
            let label = match resp.cf_prediction {
                Some(fc) => fc.probs().to_vec(),
                None => {
                    let mut onehot = vec![0.0; fx.len()];
                    onehot[1 - fx.argmax()] = 1.0;
                    onehot
                }
            };
            rows.push(c);
            labels.push(label);
            provenance.push(Provenance::Counterfactual);
        }
    }
    AttackDataset::from_rows(rows, labels, provenance)
}

/// Jensen-Shannon divergence in nats: symmetric, bounded by ln 2, with
/// `0 * log 0 = 0`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    for dist in [p, q] {
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Numeric(format!(
                "distribution sums to {sum}, expected 1"
            )));
        }
    }
    let mut js = 0.0;
    for i in 0..p.len() {
        let m = 0.5 * (p[i] + q[i]);
        if p[i] > 0.0 {
            js += 0.5 * p[i] * (p[i] / m).ln();
        }
        if q[i] > 0.0 {
            js += 0.5 * q[i] * (q[i] / m).ln();
        }
    }
    Ok(js.max(0.0))
}

/// Temperature softening: rescale log-probabilities by `1/t` and
/// re-normalize. For probabilities produced by a softmax over logits `z`,
/// this equals `softmax(z / t)`. `t = 1` is the identity.
pub fn soften(p: &[f64], t: f64) -> Vec<f64> {
    if (t - 1.0).abs() < 1e-15 {
        return p.to_vec();
    }
    let logs: Vec<f64> = p.iter().map(|&v| v.max(LOG_FLOOR).ln() / t).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// The distillation objective for one example:
/// `alpha * CE(student, hard_label) + (1 - alpha) * JS(soften(teacher),
/// soften(student))`.
pub fn kd_loss(
    student_out: &[f64],
    teacher_out: &[f64],
    hard_label: u8,
    alpha: f64,
    temperature: f64,
) -> Result<f64> {
    if student_out.len() != teacher_out.len() {
        return Err(Error::Shape("student/teacher width mismatch".into()));
    }
    let h = hard_label as usize;
    if h >= student_out.len() {
        return Err(Error::Shape("hard label out of range".into()));
    }
    let ce = -student_out[h].clamp(LOG_FLOOR, 1.0).ln();
    let js = js_divergence(
        &soften(teacher_out, temperature),
        &soften(student_out, temperature),
    )?;
    Ok(alpha * ce + (1.0 - alpha) * js)
}

/// Gradient of [`kd_loss`] with respect to the student's logits (the inputs
/// of its softmax). Exact for `student_out = softmax(z)`.
pub fn kd_loss_logit_grad(
    student_out: &[f64],
    teacher_out: &[f64],
    hard_label: u8,
    alpha: f64,
    temperature: f64,
) -> Result<Vec<f64>> {
    let k = student_out.len();
    if teacher_out.len() != k {
        return Err(Error::Shape("student/teacher width mismatch".into()));
    }
    let h = hard_label as usize;

    // Cross-entropy part: d(-ln softmax(z)_h)/dz = p - onehot(h).
    let mut grad: Vec<f64> = student_out.to_vec();
    grad[h] -= 1.0;
    for g in grad.iter_mut() {
        *g *= alpha;
    }

    // JS part through the softened student Q~ = softmax(z/T):
    // dJS/dQ~_i = 0.5 ln(Q~_i / M_i), then the softmax Jacobian at
    // temperature T contributes Q~ (g - <g, Q~>) / T.
    let p_soft = soften(teacher_out, temperature);
    let q_soft = soften(student_out, temperature);
    let mut g_js = vec![0.0; k];
    for i in 0..k {
        let m = 0.5 * (p_soft[i] + q_soft[i]);
        g_js[i] = 0.5 * (q_soft[i].max(LOG_FLOOR) / m.max(LOG_FLOOR)).ln();
    }
    let dot: f64 = g_js.iter().zip(&q_soft).map(|(g, q)| g * q).sum();
    for i in 0..k {
        grad[i] += (1.0 - alpha) * q_soft[i] * (g_js[i] - dot) / temperature;
    }
    Ok(grad)
}

/// Outcome of an alpha sweep.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub best_model: TrainedModel,
    pub best_alpha: f64,
    /// (alpha, agreement) in ascending alpha order.
    pub per_alpha: Vec<(f64, f64)>,
}

/// Direct training baseline: cross-entropy on the service's hard labels.
/// Implemented as the `alpha = 1` case of the distillation loop so the
/// equivalence between the two is exact.
pub fn direct_train(
    data: &AttackDataset,
    spec: &MLPSpec,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    let kd = KDConfig {
        alpha: 1.0,
        ..KDConfig::default()
    };
    kd_train(data, spec, &kd, config)
}

/// Train the substitute by minimizing the mean distillation loss over the
/// corpus, stopping when agreement with the teacher's hard labels on a
/// held-out fifth of the corpus stops improving (patience
/// `config.early_stop_patience`, cap `config.epochs`).
pub fn kd_train(
    data: &AttackDataset,
    spec: &MLPSpec,
    kd: &KDConfig,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    kd.validate()?;
    config.validate()?;
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::Contract("attack corpus is empty".into()));
    }
    if data.dim() != spec.input_dim() {
        return Err(Error::Shape(format!(
            "corpus dimension {} vs network input {}",
            data.dim(),
            spec.input_dim()
        )));
    }
    let hard = data.hard_labels();
    {
        let has0 = hard.iter().any(|&l| l == 0);
        let has1 = hard.iter().any(|&l| l == 1);
        if !(has0 && has1) {
            log::warn!(
                "attack corpus contains a single hard class; training proceeds but agreement will expose it"
            );
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = init_params(spec)?;

    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let use_early_stop = config.early_stop_patience > 0 && n >= 5;
    let n_val = if use_early_stop {
        (((n as f64) * VALIDATION_FRACTION).ceil() as usize).min(n - 1)
    } else {
        0
    };
    let (val_idx, fit_idx) = order.split_at(n_val);
    let val_inputs = data.inputs.select(Axis(0), val_idx);
    let val_hard: Vec<u8> = val_idx.iter().map(|&i| hard[i]).collect();
    let mut epoch_order = fit_idx.to_vec();

    let adam_cfg = config.adam();
    let mut state = AdamState::new(&params);
    let mut best: Option<(f64, ParameterSet)> = None;
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        epoch_order.shuffle(&mut rng);
        for chunk in epoch_order.chunks(config.batch_size) {
            let x = data.inputs.select(Axis(0), chunk);
            let (out, cache) = forward_train(&params, spec, &x, &mut rng)?;
            let m = chunk.len() as f64;
            let mut logit_grad = Array2::zeros(out.raw_dim());
            let mut loss = 0.0;
            for (bi, &i) in chunk.iter().enumerate() {
                let student = out.row(bi).to_vec();
                let teacher = data.soft_labels.row(i).to_vec();
                loss += kd_loss(&student, &teacher, hard[i], kd.alpha, kd.temperature)? / m;
                let g = kd_loss_logit_grad(&student, &teacher, hard[i], kd.alpha, kd.temperature)?;
                for (j, gv) in g.into_iter().enumerate() {
                    logit_grad[[bi, j]] = gv / m;
                }
            }
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    msg: "distillation loss diverged".into(),
                });
            }
            let (grads, _) = backward_from_logit_grad(&params, spec, &cache, &logit_grad)?;
            let (p, s) = adam_step(&params, &state, &grads, &adam_cfg)?;
            params = p;
            state = s;
        }

        if use_early_stop && n_val > 0 {
            let (out, _) = forward(&params, spec, &val_inputs)?;
            let mut hits = 0usize;
            for (bi, &label) in val_hard.iter().enumerate() {
                let row = out.row(bi);
                let pred = if row[1] > row[0] { 1u8 } else { 0u8 };
                if pred == label {
                    hits += 1;
                }
            }
            let val_agreement = hits as f64 / n_val as f64;
            let improved = best
                .as_ref()
                .map(|(b, _)| val_agreement > b + MIN_AGREEMENT_IMPROVEMENT)
                .unwrap_or(true);
            if improved {
                best = Some((val_agreement, params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.early_stop_patience {
                    break;
                }
            }
        }
    }

    if let Some((_, best_params)) = best {
        params = best_params;
    }
    Ok(TrainedModel {
        spec: spec.clone(),
        params,
        standardizer: None,
    })
}

/// Train one substitute per alpha in the sweep and keep the one with the
/// highest agreement against `target` on `eval_set`; exact ties resolve to
/// the smallest alpha.
pub fn sweep_alpha(
    data: &AttackDataset,
    spec: &MLPSpec,
    kd: &KDConfig,
    config: &TrainConfig,
    eval_set: &Dataset,
    target: &TrainedModel,
) -> Result<SweepOutcome> {
    if kd.alpha_sweep.is_empty() {
        return Err(Error::Config("alpha_sweep must be non-empty".into()));
    }
    let mut alphas = kd.alpha_sweep.clone();
    alphas.sort_by(|a, b| a.partial_cmp(b).expect("finite alphas"));

    let mut best: Option<(f64, f64, TrainedModel)> = None;
    let mut per_alpha = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        let cfg = KDConfig {
            alpha,
            ..kd.clone()
        };
        let model = kd_train(data, spec, &cfg, config)?;
        let agreement = crate::metrics::agreement(&model, target, eval_set)?;
        per_alpha.push((alpha, agreement));
        let better = best
            .as_ref()
            .map(|(best_agreement, _, _)| agreement > *best_agreement)
            .unwrap_or(true);
        if better {
            best = Some((agreement, alpha, model));
        }
    }
    let (_, best_alpha, best_model) = best.expect("non-empty sweep");
    Ok(SweepOutcome {
        best_model,
        best_alpha,
        per_alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_random_queries, make_synthetic};
    use crate::models::build_threat_spec;
    use crate::nn::{train_classifier, HiddenActivation, OutputActivation};
    use crate::service::{deploy, ExplanationMode, ScenarioConfig};

    #[test]
    fn js_identity_and_disjoint_bounds() {
        assert!(js_divergence(&[0.4, 0.6], &[0.4, 0.6]).unwrap() <= 1e-12);
        let max = js_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((max - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn js_matches_scalar_oracle() {
        // Independent loop over the defining formula with M = (P+Q)/2.
        let p = [1.0f64, 0.0];
        let q = [0.5f64, 0.5];
        let mut want = 0.0;
        for i in 0..2 {
            let m: f64 = 0.5 * (p[i] + q[i]);
            if p[i] > 0.0 {
                want += 0.5 * p[i] * (p[i] / m).ln();
            }
            if q[i] > 0.0 {
                want += 0.5 * q[i] * (q[i] / m).ln();
            }
        }
        let got = js_divergence(&p, &q).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.215_761_9).abs() < 1e-6, "js {got}");
    }

    #[test]
    fn js_rejects_bad_inputs() {
        assert!(matches!(
            js_divergence(&[1.0], &[0.5, 0.5]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            js_divergence(&[0.9, 0.3], &[0.5, 0.5]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn js_symmetry_bounds_over_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        use rand::Rng;
        for _ in 0..10_000 {
            let a: f64 = rng.gen();
            let b: f64 = rng.gen();
            let p = [a, 1.0 - a];
            let q = [b, 1.0 - b];
            let pq = js_divergence(&p, &q).unwrap();
            let qp = js_divergence(&q, &p).unwrap();
            assert!((pq - qp).abs() <= 1e-12);
            assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&pq));
        }
    }

    #[test]
    fn kd_loss_boundary_cases() {
        // alpha = 1: plain cross-entropy against the hard label.
        let loss = kd_loss(&[0.8, 0.2], &[0.6, 0.4], 0, 1.0, 1.0).unwrap();
        assert!((loss - (-0.8f64.ln())).abs() < 1e-15);
        // alpha = 0 with student == teacher: zero.
        let loss = kd_loss(&[0.7, 0.3], &[0.7, 0.3], 0, 0.0, 1.0).unwrap();
        assert!(loss <= 1e-12);
    }

    #[test]
    fn kd_loss_matches_frozen_oracle_value() {
        // Independent scalar evaluation of
        // 0.3 * (-ln 0.8) + 0.7 * JS((0.6,0.4), (0.8,0.2)).
        let ce = -(0.8f64.ln());
        let mut js = 0.0;
        let (p, q) = ([0.6, 0.4], [0.8, 0.2]);
        for i in 0..2 {
            let m: f64 = 0.5 * (p[i] + q[i]);
            js += 0.5 * p[i] * (p[i] / m).ln() + 0.5 * q[i] * (q[i] / m).ln();
        }
        let want = 0.3 * ce + 0.7 * js;
        let got = kd_loss(&[0.8, 0.2], &[0.6, 0.4], 0, 0.3, 1.0).unwrap();
        assert!((got - want).abs() < 1e-15);
        // Frozen from the oracle above.
        assert!((got - 0.083_853_145_141_082_86).abs() < 1e-12, "loss {got}");
    }

    #[test]
    fn kd_logit_grad_matches_finite_differences() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..50 {
            let z = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let teacher_raw = [rng.gen_range(0.05..0.95), 0.0];
            let teacher = [teacher_raw[0], 1.0 - teacher_raw[0]];
            let alpha = rng.gen_range(0.0..=1.0);
            let t = rng.gen_range(0.5..3.0);
            let hard = (trial % 2) as u8;

            let softmax = |z: &[f64; 2]| {
                let m = z[0].max(z[1]);
                let e = [(z[0] - m).exp(), (z[1] - m).exp()];
                let s = e[0] + e[1];
                [e[0] / s, e[1] / s]
            };
            let loss_of = |z: &[f64; 2]| {
                kd_loss(&softmax(z), &teacher, hard, alpha, t).unwrap()
            };
            let grad = kd_loss_logit_grad(&softmax(&z), &teacher, hard, alpha, t).unwrap();
            let h = 1e-6;
            for j in 0..2 {
                let mut zp = z;
                zp[j] += h;
                let mut zm = z;
                zm[j] -= h;
                let fd = (loss_of(&zp) - loss_of(&zm)) / (2.0 * h);
                let denom = fd.abs().max(1e-3);
                assert!(
                    ((grad[j] - fd) / denom).abs() < 1e-5,
                    "trial {trial} coord {j}: analytic {} vs fd {fd}",
                    grad[j]
                );
            }
        }
    }

    fn attack_fixture() -> (crate::data::Dataset, TrainedModel) {
        let ds = make_synthetic(300, 3, 3.0, 1).unwrap();
        let spec = build_threat_spec(3, 2);
        let config = TrainConfig {
            epochs: 60,
            ..TrainConfig::default()
        };
        let target = train_classifier(&spec, &ds, &config).unwrap();
        (ds, target)
    }

    #[test]
    fn collect_row_counts_per_scenario() {
        let (ds, target) = attack_fixture();
        let pool = generate_random_queries(60, 3, -3.0, 3.0, 9).unwrap();

        let service =
            deploy(target.clone(), None, ScenarioConfig::new(ExplanationMode::None)).unwrap();
        let corpus = collect(&service, &pool, 50).unwrap();
        assert_eq!(corpus.len(), 50);
        assert_eq!(corpus.count_by_provenance(Provenance::Counterfactual), 0);
        assert_eq!(service.total_queries(), 50);

        let cfg = crate::explainer::CounterGANConfig {
            steps: 10,
            batch_size: 16,
            seed: 4,
            ..crate::explainer::CounterGANConfig::default()
        };
        let (pair, _) = crate::explainer::train_explainer_pair(&target, &ds, &cfg).unwrap();
        let service = deploy(
            target.clone(),
            Some(pair),
            ScenarioConfig::new(ExplanationMode::Cf),
        )
        .unwrap();
        let corpus = collect(&service, &pool, 50).unwrap();
        assert_eq!(corpus.len(), 100);
        assert_eq!(corpus.count_by_provenance(Provenance::Counterfactual), 50);
        assert_eq!(service.total_queries(), 50);

        let empty = collect(&service, &pool, 0).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn hard_label_fallback_when_cf_prediction_withheld() {
        let (ds, target) = attack_fixture();
        let cfg = crate::explainer::CounterGANConfig {
            steps: 10,
            batch_size: 16,
            seed: 4,
            ..crate::explainer::CounterGANConfig::default()
        };
        let (pair, _) = crate::explainer::train_explainer_pair(&target, &ds, &cfg).unwrap();
        let scenario = ScenarioConfig {
            explanation_mode: ExplanationMode::Cf,
            cf_prediction_in_response: false,
        };
        let service = deploy(target.clone(), Some(pair), scenario).unwrap();
        let pool = generate_random_queries(10, 3, -3.0, 3.0, 2).unwrap();
        let corpus = collect(&service, &pool, 10).unwrap();
        assert_eq!(corpus.len(), 20);
        for i in 0..10 {
            let qi = 2 * i;
            let ci = 2 * i + 1;
            assert_eq!(corpus.provenance()[ci], Provenance::Counterfactual);
            // One-hot on the class opposite to the query's argmax.
            let q = corpus.soft_labels().row(qi);
            let c = corpus.soft_labels().row(ci);
            let q_arg = if q[1] > q[0] { 1 } else { 0 };
            assert_eq!(c[1 - q_arg], 1.0);
            assert_eq!(c[q_arg], 0.0);
        }
    }

    #[test]
    fn empty_corpus_is_contract_error() {
        let (_, target) = attack_fixture();
        let corpus = AttackDataset::from_rows(vec![], vec![], vec![]).unwrap();
        let spec = build_threat_spec(3, 0);
        assert!(matches!(
            direct_train(&corpus, &spec, &TrainConfig::default()),
            Err(Error::Contract(_))
        ));
        let _ = target;
    }

    #[test]
    fn direct_train_is_deterministic_and_alpha_one_equivalent() {
        let (_ds, target) = attack_fixture();
        let pool = generate_random_queries(80, 3, -3.0, 3.0, 3).unwrap();
        let service = deploy(target, None, ScenarioConfig::new(ExplanationMode::None)).unwrap();
        let corpus = collect(&service, &pool, 80).unwrap();
        let spec = build_threat_spec(3, 6);
        let config = TrainConfig {
            epochs: 30,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = direct_train(&corpus, &spec, &config).unwrap();
        let b = direct_train(&corpus, &spec, &config).unwrap();
        assert_eq!(a.params, b.params);

        let kd = KDConfig {
            alpha: 1.0,
            ..KDConfig::default()
        };
        let c = kd_train(&corpus, &spec, &kd, &config).unwrap();
        assert_eq!(a.params, c.params);
    }

    #[test]
    fn perfect_knowledge_attacker_upper_bound() {
        let (ds, target) = attack_fixture();
        let corpus = AttackDataset::from_labeled_dataset(&ds);
        let spec = build_threat_spec(3, 8);
        let config = TrainConfig {
            epochs: 80,
            seed: 3,
            ..TrainConfig::default()
        };
        let substitute = direct_train(&corpus, &spec, &config).unwrap();
        let agreement = crate::metrics::agreement(&substitute, &target, &ds).unwrap();
        assert!(agreement > 0.95, "perfect-knowledge agreement {agreement}");
    }

    #[test]
    fn sweep_returns_member_with_max_agreement_and_smallest_tie() {
        let (ds, target) = attack_fixture();
        let pool = generate_random_queries(60, 3, -3.0, 3.0, 5).unwrap();
        let service =
            deploy(target.clone(), None, ScenarioConfig::new(ExplanationMode::None)).unwrap();
        let corpus = collect(&service, &pool, 60).unwrap();
        let spec = build_threat_spec(3, 4);
        let config = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        let kd = KDConfig {
            alpha_sweep: vec![0.5, 0.0],
            ..KDConfig::default()
        };
        let outcome = sweep_alpha(&corpus, &spec, &kd, &config, &ds, &target).unwrap();
        assert!(kd.alpha_sweep.contains(&outcome.best_alpha));
        let max = outcome
            .per_alpha
            .iter()
            .map(|(_, a)| *a)
            .fold(f64::NEG_INFINITY, f64::max);
        let got = outcome
            .per_alpha
            .iter()
            .find(|(al, _)| *al == outcome.best_alpha)
            .unwrap()
            .1;
        assert_eq!(got, max);

        // Single-element sweep returns that model.
        let kd1 = KDConfig {
            alpha_sweep: vec![0.2],
            ..KDConfig::default()
        };
        let outcome = sweep_alpha(&corpus, &spec, &kd1, &config, &ds, &target).unwrap();
        assert_eq!(outcome.best_alpha, 0.2);
    }

    #[test]
    fn attack_dataset_round_trips_through_directory() {
        let (ds, target) = attack_fixture();
        let pool = generate_random_queries(20, 3, -3.0, 3.0, 7).unwrap();
        let service = deploy(target, None, ScenarioConfig::new(ExplanationMode::None)).unwrap();
        let corpus = collect(&service, &pool, 20).unwrap();
        let dir = tempfile::tempdir().unwrap();
        corpus.save(dir.path()).unwrap();
        let loaded = AttackDataset::load(dir.path()).unwrap();
        assert_eq!(loaded.len(), corpus.len());
        assert_eq!(loaded.provenance(), corpus.provenance());
        for (a, b) in corpus
            .inputs()
            .iter()
            .chain(corpus.soft_labels().iter())
            .zip(loaded.inputs().iter().chain(loaded.soft_labels().iter()))
        {
            assert_eq!(a, b);
        }
        let _ = ds;
    }

    #[test]
    fn spec_mismatch_is_shape_error() {
        let corpus = AttackDataset::from_rows(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![Provenance::Query; 2],
        )
        .unwrap();
        let spec = MLPSpec::new(
            vec![3, 4, 2],
            HiddenActivation::Relu,
            OutputActivation::Softmax,
            0,
        );
        assert!(matches!(
            direct_train(&corpus, &spec, &TrainConfig::default()),
            Err(Error::Shape(_))
        ));
    }
}
