//! Multi-seed experiment runner: every requested method on every trial seed,
//! scored by jumpstart on the noisy real system, with CSV/TOML exports.
//!
//! Each trial seed fixes the real system's latent parameter, the search's
//! random streams and the jumpstart episodes. All methods share those streams,
//! so their scores on a seed are paired.

pub mod compare;
pub mod config;
pub mod export;
pub mod runner;

use std::path::Path;

pub use compare::{compare_methods, SignTest};
pub use config::{ExperimentConfig, Method, DEFAULT_SEEDS, ENV_PREFIX};
pub use export::{export_results, format_sig6, parse_summary_csv, parse_trace_csv, summary_csv, trace_csv};
pub use runner::{
    jumpstart_seed, real_parameter, run_experiment, Aggregate, ExperimentResults, ResultRow, ResultTable,
};

use crate::error::Result;

/// Run `cfg` and write its result files under `dir`.
pub fn run_and_export(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentResults> {
    let results = run_experiment(cfg)?;
    export_results(&results, cfg, dir)?;
    Ok(results)
}
