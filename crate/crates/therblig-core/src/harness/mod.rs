//! End-to-end pipeline runner: one-shot transfer trials over Sim/Com
//! scenario layouts, success scoring with failure-category attribution,
//! the frozen benchmark presets, and report emission.

mod bench;
mod config;
mod report;
mod suite;
mod trial;

pub use bench::{
    benchmark_generator_config, benchmark_model_config, ABLATION_SEEDS, SWEEP_SEEDS, SWEEP_SIZES,
};
pub use config::FlatConfig;
pub use report::{render_report, ReportInputs};
pub use suite::{run_success_suite, success_report_csv, SuccessReport, TaskSuccess};
pub use trial::{run_trial, ScenarioConfig, ScenarioMode, TrialLabeler, TrialResult, SUCCESS_EPSILON};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario config: {0}")]
    Config(String),
    #[error(transparent)]
    Gen(#[from] crate::datagen::GenError),
    #[error(transparent)]
    Mgsf(#[from] crate::mgsf::MgsfError),
    #[error("report: {0}")]
    Report(String),
}
