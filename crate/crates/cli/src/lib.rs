//! Scenario files, artifact writers and the subcommands behind the `mesoped` binary.
//!
//! The simulation itself lives in `mesoped-core`; this crate adds everything that
//! touches the filesystem.

pub mod bundled;
pub mod commands;
pub mod output;
pub mod scenario;

pub use commands::{CliError, RunOptions, RunReport};
pub use scenario::{ConfigError, LoadedScenario, ScenarioConfig, SpawnSpec};
