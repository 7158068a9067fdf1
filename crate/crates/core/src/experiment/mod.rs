//! Experiment harness: configuration, single runs, parameter sweeps and the
//! closed resource-management loop.

mod config;
mod demo;
mod run;
mod sweep;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{
    ExperimentConfig, NrmConfig, QualityConfig, SimulationConfig, SurfaceConfig, SweepConfig, UtilityConfig,
};
pub use demo::{
    calibration_table, default_requirements, demo_local, demo_loop, policy_caps, server_context,
    write_transcript, DemoMode, DemoOutcome, DemoRound,
};
pub use run::{plan_for, run_once, simulate_point, EmosRecord, RunResult, RUN_FILES};
pub use sweep::{
    point_config, read_rows, read_rows_file, rows_for_tool, sweep, sweep_rows, write_correlations,
    write_rows, SweepOutput, SweepRow,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Path(#[from] crate::path::PathError),
    #[error(transparent)]
    Surface(#[from] crate::surface::SurfaceError),
    #[error(transparent)]
    Quality(#[from] crate::quality::QualityError),
    #[error(transparent)]
    Kpi(#[from] crate::kpi::KpiError),
    #[error(transparent)]
    Utility(#[from] crate::utility::UtilityError),
    #[error(transparent)]
    Nrm(#[from] crate::nrm::NrmError),
    #[error("results table: {0}")]
    Table(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("sweep aborted after {completed} points (partial results in {path}): {cause}")]
    PartialSweep {
        path: PathBuf,
        completed: usize,
        cause: Box<ExperimentError>,
    },
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
