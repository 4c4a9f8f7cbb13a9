//! Experiment configuration, twin runs, studies and file export.

pub mod config;
pub mod export;
pub mod run;
pub mod studies;
pub mod sweep;

pub use config::{ExperimentConfig, OutputFormat, Overrides, StudyKind, StudySpec};
pub use run::{run_observer, run_truth, run_twin, study_measurements, Trajectory, TruthRun, TwinRun, TwinSummary};
pub use sweep::{run_sweep, SweepCell, SweepSpec};
