//! Experiment orchestration: configs, sweeps, CSV persistence and the
//! verification suites.

pub mod config;
pub mod experiment;
pub mod reference;
pub mod traces;
pub mod verify;

pub use config::{ExperimentConfig, GridPoint};
pub use experiment::{plan, run_cells, run_experiment, Cell, CellResult, ExperimentReport, GridRow, SummaryRow};
pub use traces::{load_trace, read_trace, save_trace, write_trace};
pub use verify::{run_suite, verify, Check, Suite};
