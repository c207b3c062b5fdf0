//! Campaign orchestration: configuration, seeded Monte-Carlo execution and
//! file output.

pub mod campaign;
pub mod config;
pub mod output;

pub use campaign::{run_campaign, run_realization, schedule_plan, stream_rng, CampaignOutcome, RealizationResult, StrategyRun};
pub use config::{validate_config, CampaignConfig, ConfigError, OutputConfig};
pub use output::write_outputs;
