//! Experiment driver for `synclaw-core`.
//!
//! A run reads a plain-text `key = value` config, executes one of five
//! canned experiments across its seeds, and writes CSV series, a JSON
//! summary, SVG plots and a `manifest.json` listing every file with its
//! SHA-256. [`replay`] re-executes a manifest's config and checks that all
//! outputs come back byte-identical, whatever the worker count.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod output;
pub mod replay;
pub mod run;

pub use config::{Experiment, ExperimentConfig};
pub use error::{Error, Result};
pub use manifest::{Manifest, RunStatus};
pub use replay::{replay, ReplayReport};
pub use run::{run, RunOptions, RunOutcome};
