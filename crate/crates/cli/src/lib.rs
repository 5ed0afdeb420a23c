//! Library surface of the command-line front end, exposed so integration
//! tests can drive the pipeline in-process.

pub mod commands;
pub mod config;

pub use commands::{
    cfg_seed, cmd_benchmark, cmd_cointegrate, cmd_interpolate, cmd_pipeline, RunStatus,
};
pub use config::PipelineConfig;
