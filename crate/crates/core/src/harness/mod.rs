//! Experiment configuration, seeded runs, regret accounting, the Monte-Carlo
//! coverage trial, the verification suite and CSV output.

pub mod checks;
pub mod config;
pub mod coverage;
pub mod experiment;
pub mod output;

pub use config::{AgentKind, CoverageConfig, ExperimentConfig, KernelConfig};
pub use coverage::{coverage_trial, CoverageReport};
pub use experiment::{
    fit_loglog, fit_regret_exponent, recompute_regret, run_experiment, run_learner, LogLogFit,
    RegretTrace, TraceRow,
};
pub use output::{emit_plot_data, read_trace, read_traces, write_trace};
