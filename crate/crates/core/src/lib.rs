//! Fairness auditing for binary clinical risk prediction.
//!
//! The crate trains cost-sensitive classifiers, estimates subgroup error
//! rates with out-of-bag bootstrap intervals, runs sensitive-feature probes
//! (swap, omit, propensity matching, downsampling, separate fits and
//! stratified evaluation) and fits a regression tree over per-patient
//! utility gains that serves as a clinician-facing model card.

pub mod dataset;
pub mod design;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod probes;
pub mod propensity;
pub mod report;
pub mod rng;
pub mod synthgen;
pub mod utility_card;

pub use error::{Error, Result};
