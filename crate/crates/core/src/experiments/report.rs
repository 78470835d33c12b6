//! Serializable sweep results (the run's `metrics.json`).

use serde::{Deserialize, Serialize};

use super::scenario::ScenarioKind;
use super::stats::{GapStatistic, SlopeFit};

/// Sweep-level results. Wall-clock timings are kept out so that equal
/// (scenario, seed) pairs give byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub times: Vec<f64>,
    pub rungs: Vec<RungReport>,
    /// Least-squares slopes of `ln(metric)` against `ln(ħ)`.
    pub orders: Vec<OrderEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical: Option<ClassicalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub metric: String,
    pub fit: Option<SlopeFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungReport {
    pub divisor: f64,
    pub hbar: f64,
    pub extent: Vec<f64>,
    pub points: Vec<usize>,
    pub wavelength: f64,
    pub dt: f64,
    pub steps: usize,
    pub norm_drift: f64,
    pub energy_drift: f64,
    pub absorbed_probability: f64,
    /// Largest Madelung residuals at the final time over the residual floor.
    pub madelung_hj_residual: f64,
    pub madelung_continuity_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistical: Option<StatisticalMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub determinist: Option<DeterministMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub double_slit: Option<DoubleSlitMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticalMetrics {
    /// Sup over time of `|x_Bohm - x_classical|` per paired particle; `None`
    /// when the Bohm particle was absorbed at the start.
    pub particle_deviation: Vec<Option<f64>>,
    pub median_deviation: f64,
    pub max_deviation: f64,
    pub absorbed_particles: usize,
    /// Binned L1 distance between `ρ^ħ(·, T)` and the classical histogram.
    pub density_l1: Option<f64>,
    /// Sup of `|S^ħ - S_min-plus - c|` with the best constant `c`, over the
    /// common region at `T`.
    pub action_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministSample {
    pub time: f64,
    pub density_linf: f64,
    pub density_linf_relative: f64,
    /// Action error modulo a constant over `ρ ≥ action_floor · max ρ`.
    pub action_error: f64,
    /// Same over the decomposition floor.
    pub action_error_decomposition_floor: f64,
    /// `Q^ħ(ξ(t))` from spectral interpolation of the numeric field.
    pub q_on_path: f64,
    /// `|Q^ħ(ξ(t)) - (d/2)ħω| / ħω`.
    pub q_on_path_error: f64,
    /// Same from the sampled exact state.
    pub q_on_path_error_exact_state: f64,
    /// `max |Q - Q_exact| / max(|Q_exact|, ħω)` over the action floor region,
    /// numeric field.
    pub q_off_path_error: f64,
    /// Same from the sampled exact state.
    pub q_off_path_error_exact_state: f64,
    /// `∫ f dρ^ħ - f(ξ(t))` for the test-function battery.
    pub weak_errors: Vec<f64>,
    /// `sup |S^ħ - S_limit|` on the window around `ξ(t)`, with the global
    /// phase tracked in time.
    pub action_limit_gap: f64,
    /// `(d/2) ħ ω t`.
    pub zero_point_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceSample {
    pub time: f64,
    pub l1: f64,
    pub bins: usize,
    pub live_particles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministMetrics {
    pub weak_functions: Vec<String>,
    pub samples: Vec<DeterministSample>,
    pub equivariance: Vec<EquivarianceSample>,
    /// Residual of the limiting Hamilton-Jacobi equation along `ξ(t)`.
    pub limit_hj_residual: f64,
    /// `|g| quadrature vs closed form`, largest over sample times.
    pub g_quadrature_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleSlitMetrics {
    pub transmitted: usize,
    pub reflected: usize,
    pub absorbed_before_wall: usize,
    pub endpoint_clusters: GapStatistic,
    pub axis_crossings: usize,
    pub vortices_at_end: usize,
    /// Mean of `|v × a| / |v|³` behind the wall.
    pub mean_curvature: f64,
    /// Mean sup distance from the straight line leaving the slit.
    pub straight_line_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalReport {
    pub time: f64,
    pub minplus_points: Vec<usize>,
    pub minplus_hj_residual: f64,
    pub flagged_nodes: usize,
}
