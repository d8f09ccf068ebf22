//! Experiment configuration, ensembles, fits and reports.

pub mod commands;
pub mod compare;
pub mod config;
pub mod ensemble;
pub mod fit;
pub mod report;

pub use compare::{compare_mlp_ode, CompareReport};
pub use config::ExperimentConfig;
pub use ensemble::{run_ensemble, write_ensemble, EnsembleRun, EnsembleSummary, GridPoint, HitStats};
pub use fit::{fit_scaling, FitResult};
pub use report::write_report;
