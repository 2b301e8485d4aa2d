//! Experiment driver for `pbdw-core`: TOML configuration, the placement,
//! convergence and regularization studies, CSV output and the end-to-end
//! property suite.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod studies;
pub mod suite;

pub use config::ExperimentConfig;
pub use error::CliError;
