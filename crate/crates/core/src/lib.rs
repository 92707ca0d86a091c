//! Evolving multi-label Takagi–Sugeno fuzzy classification for data streams.
//!
//! The crate provides dataset ingestion, the EFC-ML learner with
//! correlation-regularized consequents, one-versus-rest and classifier-chain
//! baselines, budgeted active learning, prequential metrics and an evaluation
//! harness.

// `!(x > 0.0)` checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod active;
pub mod antecedent;
pub mod baselines;
pub mod consequent;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod learner;
pub mod linalg;
pub mod metrics;
pub mod rulebase;

pub use error::{Error, Result};
pub use ingest::{Dataset, Sample};
pub use learner::{EfcMl, ModelDocument, StreamLearner};
pub use rulebase::{LearnConfig, Rule, RuleBase};
