//! The simulated MLaaS boundary: wraps a deployed classifier and optional
//! explainer behind an opaque handle whose only operation is `query`.
//!
//! A query returns the confidence scores `f(x)`, and in the counterfactual
//! scenarios the counterfactual `c` (plus `f(c)` when the service is
//! configured to include it). Model parameters are unreachable through the
//! handle; the query log meters exactly one unit per call regardless of
//! whether a counterfactual is attached.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainer::ExplainerPair;
use crate::nn::{SoftPrediction, TrainedModel};

/// What the platform attaches to each prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationMode {
    None,
    Cf,
    PrivateCf,
}

impl std::fmt::Display for ExplanationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExplanationMode::None => "none",
            ExplanationMode::Cf => "cf",
            ExplanationMode::PrivateCf => "private_cf",
        };
        f.write_str(s)
    }
}

/// Deployment-time scenario switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub explanation_mode: ExplanationMode,
    /// Whether responses carry `f(c)` alongside `c`. When false the attacker
    /// must label counterfactuals itself (or spend budget re-querying them).
    pub cf_prediction_in_response: bool,
}

impl ScenarioConfig {
    pub fn new(mode: ExplanationMode) -> Self {
        ScenarioConfig {
            explanation_mode: mode,
            cf_prediction_in_response: true,
        }
    }
}

/// One service response: prediction always, counterfactual data per scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryResponse {
    pub prediction: SoftPrediction,
    pub cf: Option<Vec<f64>>,
    pub cf_prediction: Option<SoftPrediction>,
}

/// Audit record for one query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRecord {
    pub input_hash: u64,
    pub timestamp_ms: u64,
    pub scenario: String,
}

/// The deployed black box. Only `query` and metering accessors are public;
/// the wrapped models are private fields with no accessor, so the handle
/// leaks nothing beyond (prediction, cf, cf_prediction) per call.
pub struct Service {
    classifier: TrainedModel,
    explainers: Option<ExplainerPair>,
    scenario: ScenarioConfig,
    budget: Option<u64>,
    total_queries: AtomicU64,
    records: Mutex<Vec<QueryRecord>>,
}

/// Deploy a classifier (and, for the counterfactual scenarios, a generator
/// pair) behind the service boundary.
///
/// The wiring is validated both ways: explanation scenarios need a matching
/// pair (DP-trained for `PrivateCf`, non-DP for `Cf`) and the no-explanation
/// scenario must not carry one.
pub fn deploy(
    classifier: TrainedModel,
    explainers: Option<ExplainerPair>,
    scenario: ScenarioConfig,
) -> Result<Service> {
    match (scenario.explanation_mode, &explainers) {
        (ExplanationMode::None, Some(_)) => {
            return Err(Error::Config(
                "no-explanation scenario must not carry generators".into(),
            ))
        }
        (ExplanationMode::None, None) => {}
        (_, None) => {
            return Err(Error::Config(
                "counterfactual scenario deployed without generators".into(),
            ))
        }
        (ExplanationMode::Cf, Some(pair)) if pair.is_dp() => {
            return Err(Error::Config(
                "cf scenario requires non-DP generators".into(),
            ))
        }
        (ExplanationMode::PrivateCf, Some(pair)) if !pair.is_dp() => {
            return Err(Error::Config(
                "private_cf scenario requires DP-trained generators".into(),
            ))
        }
        _ => {}
    }
    Ok(Service {
        classifier,
        explainers,
        scenario,
        budget: None,
        total_queries: AtomicU64::new(0),
        records: Mutex::new(Vec::new()),
    })
}

impl Service {
    /// Cap the number of queries the service will answer.
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn scenario(&self) -> ScenarioConfig {
        self.scenario
    }

    pub fn input_dim(&self) -> usize {
        self.classifier.input_dim()
    }

    /// Queries answered since deployment.
    pub fn total_queries(&self) -> u64 {
        self.total_queries.load(Ordering::SeqCst)
    }

    /// Answer one query. One call is one budget unit, counterfactual or not;
    /// a rejected (over-budget or malformed) call is not counted.
    pub fn query(&self, x: &[f64]) -> Result<QueryResponse> {
        if x.len() != self.classifier.input_dim() {
            return Err(Error::Request(format!(
                "query has dimension {}, service expects {}",
                x.len(),
                self.classifier.input_dim()
            )));
        }
        if let Some(budget) = self.budget {
            let admitted = self
                .total_queries
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |current| {
                    (current < budget).then_some(current + 1)
                })
                .is_ok();
            if !admitted {
                return Err(Error::Quota(format!("query budget {budget} exhausted")));
            }
        } else {
            self.total_queries.fetch_add(1, Ordering::SeqCst);
        }

        let response = match (&self.explainers, self.scenario.explanation_mode) {
            (None, _) | (_, ExplanationMode::None) => QueryResponse {
                prediction: self.classifier.predict(x)?,
                cf: None,
                cf_prediction: None,
            },
            (Some(pair), _) => {
                let cf_pair = pair.generate_cf(&self.classifier, x)?;
                QueryResponse {
                    prediction: cf_pair.fx,
                    cf: Some(cf_pair.c),
                    cf_prediction: self
                        .scenario
                        .cf_prediction_in_response
                        .then_some(cf_pair.fc),
                }
            }
        };

        self.records.lock().expect("query log lock").push(QueryRecord {
            input_hash: hash_input(x),
            timestamp_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            scenario: self.scenario.explanation_mode.to_string(),
        });
        Ok(response)
    }

    /// Export the audit log as line-delimited JSON, one record per query.
    pub fn export_trace(&self, mut out: impl Write) -> Result<()> {
        let records = self.records.lock().expect("query log lock");
        for record in records.iter() {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn hash_input(x: &[f64]) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    for v in x {
        v.to_bits().hash(&mut hasher);
    }
    hasher.finish()
}
