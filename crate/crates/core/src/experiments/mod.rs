//! Scenario definitions and the ħ-sweep harness.
//!
//! A [`Scenario`] is parsed from a TOML file, sized per ħ rung by
//! [`Scenario::plan`], and executed by [`run_sweep`]; [`write_run`] lays
//! the results out in a run directory.

mod output;
mod report;
mod run;
mod scenario;
pub mod stats;

use thiserror::Error;

use crate::bohm::BohmError;
use crate::classical::ClassicalError;
use crate::coherent::CoherentError;
use crate::grid::GridError;
use crate::madelung::MadelungError;
use crate::solver::SolverError;

pub use output::{run_to_dir, write_run, FieldDump, RunManifest};
pub use report::{
    ClassicalReport, ConvergenceReport, DeterministMetrics, DeterministSample, DoubleSlitMetrics, EquivarianceSample, OrderEstimate,
    RungReport, StatisticalMetrics,
};
pub use run::{run_determinist_sweep, run_double_slit, run_statistical_sweep, run_sweep, SweepOutput, WEAK_FUNCTIONS};
pub use scenario::{
    AnalysisSpec, InitialState, PacketSpec, RungPlan, Scenario, ScenarioError, ScenarioFile, ScenarioKind, POINTS_PER_WAVELENGTH,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("solver: {0}")]
    Solver(#[from] SolverError),
    #[error("madelung decomposition: {0}")]
    Madelung(#[from] MadelungError),
    #[error("bohmian transport: {0}")]
    Bohm(#[from] BohmError),
    #[error("classical limit: {0}")]
    Classical(#[from] ClassicalError),
    #[error("coherent state: {0}")]
    Coherent(#[from] CoherentError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("writing {path}: {message}")]
    Io { path: String, message: String },
}

impl ExperimentError {
    /// Configuration problems, as opposed to failures during the run.
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Scenario(_))
    }
}
