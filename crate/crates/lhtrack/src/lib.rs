//! Session files, scenario configs and the staged command-line pipeline
//! around [`lhtrack_core`].

pub mod config;
pub mod format;
pub mod manifest;
pub mod pipeline;
pub mod tables;

pub use config::{parse_scenario_config, ConfigError};
pub use format::{read_session, write_session, FormatError};
pub use manifest::{Estimator, RunManifest};
pub use pipeline::PipelineError;
