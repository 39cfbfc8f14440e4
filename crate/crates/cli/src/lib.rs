//! Scenario parsing and execution behind the `wavecontrol` binary.

pub mod runner;
pub mod scenario;

pub use runner::{compare, resolve, run, run_method, RunError, Status, Summary, EXIT_CODE_TABLE};
pub use scenario::{parse_config, ParseError, ParseErrors, Profile, RunMethod, Scenario};
