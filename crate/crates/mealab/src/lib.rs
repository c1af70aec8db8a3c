//! mealab — a desk-scale laboratory for studying model extraction attacks
//! against MLaaS platforms that serve counterfactual explanations.
//!
//! The crate simulates the full loop:
//!
//! 1. a defender trains a dense-network classifier ([`models`], [`nn`]) and a
//!    residual-GAN counterfactual explainer ([`explainer`]), optionally made
//!    differentially private ([`privacy`]), and deploys both behind a
//!    black-box prediction service ([`service`]);
//! 2. an attacker with zero knowledge of the training data queries the
//!    service with random points ([`data`]), collects predictions and
//!    counterfactuals, and trains a substitute model either directly or by
//!    knowledge distillation with a Jensen-Shannon distillation term
//!    ([`attack`]);
//! 3. the lab scores the attack by agreement and the explainer by prediction
//!    gain, realism and actionability ([`metrics`]), sweeping scenarios,
//!    query budgets and repeated runs into CSV curves ([`experiment`]).
//!
//! Start with the runnable examples (`cargo run --release --example
//! extraction_attack`) or the `mealab` binary, which exposes each stage as a
//! subcommand.

pub mod attack;
pub mod data;
pub mod error;
pub mod experiment;
pub mod explainer;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod privacy;
pub mod seeding;
pub mod service;

pub use error::{Error, Result};
