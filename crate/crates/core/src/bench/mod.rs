//! Sweeps, figure tables and the certificate bundle behind the CLI.

pub mod config;
pub mod figures;
pub mod sweep;
pub mod verify;

pub use config::{AlgorithmSpec, Convention, ExperimentConfig, Method, ProblemSpec, VerifyConfig};
pub use figures::emit_figure_data;
pub use sweep::{run_sweep, BestRun, Hyper, RunRecord, SweepSummary};
pub use verify::{run_reduce, run_verify, CheckResult, CheckStatus, VerifyBundle};
