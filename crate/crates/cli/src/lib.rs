//! Experiment harness for clustering-informed Mahalanobis metrics: configs,
//! runners, CSV/JSON IO and the command-line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod report;

pub use config::{Experiment, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use experiments::run;
pub use report::{Curve, ExperimentReport};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "INFOMETRIC_OUT_DIR";
