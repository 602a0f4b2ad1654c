//! Experiment configuration, sweeps, benchmark and CSV output.

pub mod bench;
pub mod config;
pub mod sweep;

pub use bench::{fit_slope, run_complexity_bench, BenchRow, BenchTable};
pub use config::{db_to_linear, linear_to_db, ExperimentConfig, MetricSet, OperatorSpec};
pub use sweep::{
    run_csi_error_sweep, run_snr_sweep, Case, InterferenceCheck, Recon, SweepRow, SweepTable,
    CSV_HEADER,
};
