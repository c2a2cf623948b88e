//! Orchestration for the `nnim` binary: run configuration, the end-to-end
//! pipeline with its run directory, and results tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod pipeline;
pub mod tables;

pub use config::{Method, RunConfig, Source};
pub use error::CliError;
