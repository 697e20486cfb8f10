//! Scenario runner, file formats and report aggregation on top of
//! `fpspeed-core`.

pub mod config;
pub mod error;
pub mod formats;
pub mod report;
pub mod run;

pub use config::Scenario;
pub use error::CliError;
pub use run::{run_scenario, Mode, RunOptions, RunReport};
