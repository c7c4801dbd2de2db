//! Experiment runners, configuration and result files.

pub mod appendix;
pub mod config;
pub mod grid;
pub mod record;
pub mod results;
pub mod stats;

pub use appendix::{run_appendix, write_appendix, AppendixRun, HoleSplit, Segment};
pub use config::{AppendixSettings, ExperimentConfig, LrMode, NoiseMode, Protocol};
pub use grid::{run_grid, run_grid_trial, sample_trial_data, GridOutcome, TrialData};
pub use record::{trial_id, TrialRecord, TrialStatus};
pub use results::{
    emit_results, read_manifest, read_results_csv, read_summary_csv, write_manifest, Manifest,
    ResultRow,
};
pub use stats::{aggregate, spearman, SummaryRow};
