//! Scenario files in, reproducible result directories out.
//!
//! A run directory holds the normalized scenario echo, the result tables,
//! one CSV per optimizer trace and a `manifest.json` listing all of them.

pub mod compare;
pub mod error;
pub mod parse;
pub mod run;

pub use compare::{compare_runs, DiffReport};
pub use error::{CliError, EXIT_RUNTIME, EXIT_VALIDATION};
pub use parse::{normalized_json, parse_scenario, parse_scenario_in, parse_spec, ParsedScenario};
pub use run::{canonical_json, execute, scenario_hash, synthesize_environment, OutputFormat, RunManifest, MANIFEST_FILE};
