//! Monte-Carlo experiments: configuration, sweeps over the power budget,
//! baselines and CSV output.

mod config;
mod output;
mod sweep;

pub use config::{
    load_config, AlgorithmSection, CircuitSection, ExperimentConfig, GraphSection, Mode, SystemSection,
};
pub use output::{format_g, write_csv, write_rows, write_trace_csv, write_traces, CSV_DIGITS};
pub use sweep::{cell_seed, draw_realization, initial_caps, run_baseline, run_cell, run_sweep, run_sweep_traced, ResultRow};
