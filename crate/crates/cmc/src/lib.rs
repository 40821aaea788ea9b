//! File formats, parallel drivers and the command-line front end for `cmc-core`.

pub mod config;
pub mod error;
pub mod export;
pub mod fixtures;
pub mod parallel;
pub mod run;
pub mod stats;

pub use error::{CliError, CliResult};
pub use run::{run, Command, RunConfig, RunOutput};
