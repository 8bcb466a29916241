//! Configuration, dispatch and output for the `shocklab` command.

pub mod config;
pub mod run;

pub use config::{ConfigError, Mode, Overrides, RunConfig, DEFAULTS_HELP};
pub use run::{run_scenario, thread_cap, Failure, Outcome, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK};
