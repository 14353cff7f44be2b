//! Experiment harness for the `zpca` protocols.
//!
//! The library crate computes; this crate *grades*. It owns everything an
//! experiment needs around the protocol itself:
//!
//! * [`config`] — flat `key=value` experiment descriptions, strictly
//!   validated and echoed verbatim into every report.
//! * [`dataset`] — loading, saving, and generating input matrices.
//! * [`partition`] — manufacturing the distributed state: row blocks or
//!   exact random additive shares, plus generalized-mean preprocessing.
//! * [`corrupt`] — seeded entry corruption for the robustness experiments.
//! * [`experiment`] — running the pipeline, measuring additive and relative
//!   error against central oracles, and emitting deterministic CSV reports
//!   with word-budget bookkeeping.
//! * [`tune`] — choosing the largest sample count a word budget sustains.
//!
//! The `zpca-bench` binary wires these into `run`, `tune`, and
//! `gen-synthetic` subcommands.

pub mod config;
pub mod corrupt;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod partition;
pub mod tune;

pub use config::{DatasetFormat, ExperimentConfig, FunctionSpec, PartitionMode, RunMode};
pub use corrupt::{corrupt_entries, Corruption};
pub use dataset::{load_dataset, save_dataset, synthetic_low_rank};
pub use error::{Error, Result};
pub use experiment::{
    bench_sampler_profile, run_experiment, Clock, ErrorReport, FixedClock, RealClock, ReportRow,
    RunStatus, REPORT_HEADER,
};
pub use partition::{gm_shares, partition};
pub use tune::{max_samples_within_budget, tune, TuneOutcome};
