//! Experiment files, evaluation loops and result writers.

pub mod config;
pub mod heatmap;
pub mod metrics;
pub mod runner;
pub mod stages;

pub use config::{EnvSpec, ExperimentConfig, MethodSpec, Model, TransferConfig};
pub use heatmap::write_heatmaps;
pub use metrics::{wilson_interval, EpisodeRecord, Metrics, Timing};
pub use runner::{run, tabular, transfer_eval, write_report, write_rp_artifacts, MethodOutcome, RunReport};
pub use stages::{plan, recon, write_plan, write_recon, Recon, ReconSummary};
