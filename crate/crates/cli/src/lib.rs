//! Batch experiment runner for `bbmx-core`: flat key=value configurations,
//! an experiment registry, a bounded worker pool with ordered aggregation,
//! CSV/JSONL persistence, plot-data emission and the verification suite.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod plot;
pub mod pool;
pub mod suite;

pub use config::{ExperimentConfig, ParamValue, WORKERS_ENV};
pub use error::{CliError, CliResult};
pub use experiments::{run, Experiment, ExperimentOutput, Registry, RunContext};
pub use output::{RunRecord, Table, TOOL_VERSION};
pub use plot::{emit_plot_data, PlotKind};
pub use pool::WorkerPool;
pub use suite::{CriterionResult, Suite, SuiteScale, CRITERIA};
