//! Experiment driver: configuration, amplitude sweeps, lifespan fits and
//! file outputs for the blowup laboratory.

pub mod commands;
pub mod config;
pub mod fit;
pub mod output;
pub mod svg;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig, RawConfig};
pub use fit::{fit_scaling, ScalingFit, TheoryForm};
pub use sweep::{run_single, run_sweep, RunRecord, SweepResult};
