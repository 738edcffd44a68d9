//! Config loading, experiment dispatch and CSV output for the `simulate`
//! binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod run;

pub use config::{Experiment, Plan, RunConfig};
pub use error::{CliError, Result};
pub use presets::list_presets;
pub use run::{execute, load, power_command, run, RunOptions, OUT_DIR_ENV};
