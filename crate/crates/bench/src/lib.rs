//! Experiment harness for the flow editing samplers: TOML configuration,
//! parallel seed sweeps, the 2x2 sequence/noise ablation, CSV summaries,
//! SVG plots and run manifests.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod svg;

pub use cli::cli_main;
pub use config::{AnalyticPair, Experiment, ExperimentConfig};
pub use error::{BenchError, BenchResult};
pub use experiments::{run_ablation, Ablation};
pub use report::{emit_report, Report, RunManifest};
