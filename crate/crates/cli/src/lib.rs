//! Batch front end for `gest-core`: run configuration, subcommands and the
//! Monte Carlo validation harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod montecarlo;

pub use config::{Check, Model, RunConfig};
pub use error::{CliError, Result};
