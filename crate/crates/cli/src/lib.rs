//! Experiment driver for synthetic tracking sweeps, plus standalone
//! certification and pruning tools.

pub mod config;
pub mod experiment;
pub mod summary;
pub mod tools;

mod error;

pub use config::{ExperimentConfig, Horizon, SweepAxis, SweepPoint, WeightMode};
pub use error::{CliError, Result};
pub use experiment::{collect_trials, run_sweep, run_trial, write_csv, SweepOutput, TrialRecord, CSV_HEADER};
pub use summary::{summarize, PointSummary, Spread};
