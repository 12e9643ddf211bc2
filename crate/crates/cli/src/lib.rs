//! Command-line pipelines for cavity-electromechanical devices: device configuration
//! files, trace files, synthetic data, fit reports and SVG plots on top of `emech-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod jitter;
pub mod plot;
pub mod report;
pub mod synth;
pub mod trace;

pub use error::{CliError, Result};
