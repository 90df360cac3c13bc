//! Synthetic causal-inference testing grounds: covariate generation,
//! knob-driven data-generating processes with oracle truth, dataset
//! descriptors, a suite of SATT estimators, and an evaluation harness.

pub mod covariates;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
