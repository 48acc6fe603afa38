//! Leakage-free tuberculosis screening from cough audio and clinical
//! records.

pub mod calibration;
pub mod conformal;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod features;
pub mod learners;
pub mod matrix;
pub mod metrics;
pub mod rng;
pub mod splits;

pub use error::{Error, ErrorClass, Result};
