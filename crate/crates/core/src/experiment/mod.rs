//! Experiment configuration, named presets and the runner that turns them
//! into metrics tables and reports.

pub mod config;
pub mod presets;
mod runner;

pub use config::{ExperimentConfig, Overrides};
pub use presets::{preset, Preset, PresetKind, DEFAULT_PRESETS, PRESET_NAMES};
pub use runner::{
    consistency_for_alpha, measured_savings, preset_config, preset_dir, run_config, run_preset, run_seed, Check,
    RateSample, Report, SeedRun,
};
