//! End-to-end experiment harness.
//!
//! An experiment is a pure function of an [`ExperimentConfig`]: for every
//! seed it splits the data, trains a target, stands up a fresh oracle per
//! method and runs the attack, then scores each surrogate against the target
//! on the test split. Everything lands under `<output_dir>/<name>/`:
//!
//! ```text
//! <method>/<seed>/report.json        per-cell scores
//! <method>/<seed>/surrogate.model    (target.model for the target row)
//! <method>/<seed>/training_set.jsonl oracle answers and augments
//! summary.csv                        method × metric, mean and std over seeds
//! metadata.json                      wall-clock timestamps, kept apart
//! ```

mod config;
mod output;
mod run;

pub use config::{load_config, parse_config, DatasetSpec, ExperimentConfig, Method, OracleMode};
pub use output::{read_reports, summarize, summary_csv, write_summary_csv, CellReport, SummaryRow, SweepRow};
pub use run::{
    cross_distribution, evaluate, prepare_seed, run_cell, run_experiment, sweep_budget, CellFailure, CrossDistReport,
    ExperimentOutcome, SeedContext,
};
