//! Nearest-neighbor influence models for inferring hidden labels of the
//! periphery of a social graph from a small, fully labeled core.
//!
//! The pipeline is: load a [`graph::LabeledGraph`], pick a core with
//! [`core_extract::bgmc`], then either simulate the stochastic dynamics
//! ([`dynamics`]) or run the mean-field inference ([`inference`]) and score the
//! result with [`metrics`].

// Parameter checks are written as `!(x >= 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod core_extract;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod inference;
pub mod knn;
pub mod metrics;
pub mod rng;
pub mod synth;
pub mod theory;
pub mod trajectory;

pub use error::{Error, Result};
