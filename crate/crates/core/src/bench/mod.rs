//! Monte-Carlo experiment harness: configuration, runners and result tables.

mod config;
mod experiments;
mod table;

pub use config::{db_to_linear, dbm_to_watts, RunConfig};
pub use experiments::{
    run_convergence, run_element_sweep, run_power_sweep, run_scheme, run_single, scenario_channels, RunOptions, TraceRow,
    TraceTable,
};
pub use table::{fmt_num, Experiment, Format, ResultTable, Row, Scheme, STATUS_FAILED};
