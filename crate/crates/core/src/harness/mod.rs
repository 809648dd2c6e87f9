//! Experiment configuration, the end-to-end benchmark pipeline, report
//! emitters and the `fraudbench` command line.

mod cli;
mod config;
mod emit;
mod pipeline;

pub use cli::cli_dispatch;
pub use config::{
    parse_schema, DataSource, ExperimentConfig, ModelConfig, ModelSpec, StageOrder, StandardizeMode, CONFIG_KEYS,
};
pub use emit::{emit_correlation_csv, emit_scatter_svg, metrics_row, scatter_svg, METRICS_HEADER};
pub use pipeline::{load_data, prepare, run_pipeline, verify_outputs, BenchmarkRow, BenchmarkTable, PreparedData};
