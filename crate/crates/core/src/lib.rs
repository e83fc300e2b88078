//! Aggregation scaling laws for load-forecast error.
//!
//! Synthetic customer populations, random aggregation groups, rolling-origin
//! forecasters, accuracy metrics, the `err² = α₀/W^p + α₁` fit and the
//! Monte Carlo checks of its theoretical variance model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod experiment;
pub mod forecast;
pub mod grouping;
pub mod metrics;
mod rng;
pub mod scaling;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};
