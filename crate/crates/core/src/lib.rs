//! Predicting morning roadway congestion onset and duration from time-of-day
//! household electricity use.
//!
//! The pipeline clusters normalized daily load profiles into typical
//! patterns, turns each day's pattern assignments into features, extracts
//! congestion starting time (CST) and duration from travel-time series, and
//! fits L1-regularized linear predictors evaluated by nested cross-validation
//! against traffic-only baselines.

pub mod baselines;
pub mod clustering;
pub mod congestion;
pub mod data;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod regression;
pub mod similarity;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
