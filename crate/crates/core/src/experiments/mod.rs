//! Experiment configuration, optimization runs and verification suites.

pub mod config;
pub mod run;
pub mod verify;

pub use config::{ExperimentConfig, Regime, SweepParam, SweepSpec, VerifyConfig};
pub use run::{base_case, run_base_case, run_sweep, sweep, Artifact, RunOutput, SweepRow};
pub use verify::{run_verify, SuiteResult, VerifyReport};
