//! Experiment layer: config files, scenario runners and their CSV/SVG outputs.

pub mod config;
pub mod output;
pub mod plot;
pub mod scenarios;

pub use config::{parse_config, ConfigError, ExperimentConfig, Scenario, RESOLVED_CONFIG_FILE};
pub use output::Histogram;
pub use scenarios::{run_scenario, ScenarioReport};
