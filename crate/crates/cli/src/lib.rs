//! Command-line experiments for censor-aware survival-time regression:
//! synthetic data generation, bin planning, training, evaluation and the
//! censoring-ratio sweep.

pub mod commands;
pub mod config;
pub mod sweep;

pub use commands::{Ablation, Globals};
pub use config::ExperimentConfig;
pub use sweep::{Arm, SweepRow};
