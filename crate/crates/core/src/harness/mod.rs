//! Regret experiments: configuration, trial loop, trace files and plot data.

pub mod config;
pub mod plot;
pub mod run;

pub use config::{
    BoundSpec, EnvKind, ExperimentConfig, GammaChoice, KernelFamily, LambdaSpec, NoiseScale,
    PolicyKind, TieRule,
};
pub use plot::{emit_plot_data, PlotData};
pub use run::{
    build_environment, run_experiment, run_trial, run_trial_on, summarize, ExperimentResult,
    RegretTrace, RoundRecord, SummaryRow,
};
