//! Experiment harness for dual-blind deconvolution: configuration, single
//! runs, Monte Carlo sweeps and plot-data export.

pub mod config;
pub mod experiment;

pub use config::{Axis, ExperimentConfig, SweepSpec};
pub use experiment::{run_single, run_sweep, RecoveryFile, SceneBundle, SolutionFile, TrialRecord};
