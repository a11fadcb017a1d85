//! Experiment runner for Herman–Kluk propagation studies: single
//! propagations, ħ-scaling and phase-invariance ladders, Ehrenfest-time
//! sweeps and kernel inspection.

pub mod config;
pub mod experiments;
pub mod fit;
pub mod output;

pub use config::{parse_config, ConfigError, ExperimentConfig};
