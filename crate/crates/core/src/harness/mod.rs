//! Experiment harness: config ingestion, seeded sweeps over data
//! compositions and strategies, persisted records, tables and plot data.

pub mod config;
pub mod report;
pub mod run;
pub mod verify;

pub use config::{apply_override, Composition, DataSpec, ExperimentConfig};
pub use report::{emit_plotdata, emit_table, mean_ci, Table};
pub use run::{read_records, records_csv, run_and_persist, run_experiment, write_records, ArmOutcome, RunRecord, SeedContext, SweepOutput};
