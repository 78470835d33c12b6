//! Sweep execution: one streaming propagation per ħ rung, analysed as the
//! snapshots go by.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;

use super::output::FieldDump;
use super::report::*;
use super::scenario::{InitialState, PacketSpec, RungPlan, Scenario, ScenarioError, ScenarioKind};
use super::stats::{binned_l1, gap_statistic, loglog_slope, median, normal_quantile_edges, rectangle_mass};
use super::ExperimentError;
use crate::bohm::{sample_positions, velocity_field, EnsembleIntegrator, SamplingMode, VelocityFieldSample};
use crate::classical::{
    classical_paths, determinist_solution, evolve_classical_density, hj_residual, hopf_lax_solve, InitialAction, MinPlusSolution,
    NodeFlag, SearchGrid, MIN_CLASSICAL_PARTICLES,
};
use crate::coherent::CoherentState;
use crate::grid::{laplacian, multilinear, FieldUnits, Grid, Point, RealField, WaveField};
use crate::madelung::{decompose, madelung_residuals, nan_max_abs, wrap_phase, MadelungFields};
use crate::potentials::PotentialKind;
use crate::solver::{edge_absorber, Observation, Observer, Propagator, PropagatorConfig};
use crate::trajectory::{sup_deviation, TrajectoryEnsemble, TrajectoryKind};

/// Names of the weak-convergence test functions, in report order.
pub const WEAK_FUNCTIONS: [&str; 5] = ["r2", "cos_cos", "exp_sum", "cubic", "bump"];

/// Everything a sweep produced, for reporting and file output.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub report: ConvergenceReport,
    pub plans: Vec<RungPlan>,
    /// Bohm ensemble per rung.
    pub bohm: Vec<TrajectoryEnsemble>,
    pub classical: Option<TrajectoryEnsemble>,
    pub fields: Vec<FieldDump>,
    pub wall_seconds: Vec<f64>,
}

struct RungOutput {
    report: RungReport,
    bohm: TrajectoryEnsemble,
    fields: FieldDump,
    seconds: f64,
}

pub fn run_sweep(scenario: &Scenario, jobs: usize) -> Result<SweepOutput, ExperimentError> {
    match scenario.kind {
        ScenarioKind::Statistical => run_statistical_sweep(scenario, jobs),
        ScenarioKind::Determinist => run_determinist_sweep(scenario, jobs),
        ScenarioKind::DoubleSlit => run_double_slit(scenario, jobs),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, ExperimentError> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| ExperimentError::Pool(e.to_string()))
}

fn output_times(s: &Scenario) -> Vec<f64> {
    let n = (s.t_final / s.output_interval).round() as usize;
    (0..=n).map(|k| k as f64 * s.output_interval).collect()
}

fn time_indices(s: &Scenario, times: &[f64]) -> BTreeSet<usize> {
    times.iter().map(|t| (t / s.output_interval).round() as usize).collect()
}

fn rho_max(psi: &WaveField) -> f64 {
    psi.values().iter().map(|c| c.norm_sqr()).fold(0.0, f64::max)
}

fn packet(s: &Scenario) -> Result<PacketSpec, ExperimentError> {
    match s.initial {
        InitialState::Packet(p) => Ok(p),
        InitialState::Coherent { .. } => Err(ScenarioError::HbarDependentInitial.into()),
    }
}

fn absorber(s: &Scenario, grid: &Grid) -> Option<RealField> {
    (s.absorber_width > 0.0 && s.absorber_strength > 0.0).then(|| edge_absorber(grid, s.absorber_width, s.absorber_strength))
}

fn propagator(s: &Scenario, plan: &RungPlan, mask: Option<RealField>) -> Result<Propagator, ExperimentError> {
    let mut cfg = PropagatorConfig::new(plan.dt, plan.steps_per_output)?;
    if let Some(m) = mask {
        cfg = cfg.with_mask(m)?;
    }
    Ok(Propagator::new(plan.grid, &s.potential, plan.hbar, &cfg)?)
}

fn drifts(obs: &[Observation]) -> (f64, f64) {
    let n0 = obs[0].norm.unwrap_or(1.0);
    let e0 = obs[0].energy.unwrap_or(0.0);
    let norm = obs.iter().filter_map(|o| o.norm).map(|n| (n - n0).abs()).fold(0.0, f64::max);
    let energy = obs.iter().filter_map(|o| o.energy).map(|e| (e - e0).abs() / e0.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    (norm, energy)
}

/// Madelung residuals between the final field and one further (maskless)
/// step, over `ρ ≥ floor · max ρ`.
fn final_residuals(s: &Scenario, plan: &RungPlan, psi: &WaveField) -> Result<(f64, f64), ExperimentError> {
    let prop = propagator(s, plan, None)?;
    let next = prop.step(psi)?;
    let floor = s.analysis.residual_floor;
    let a = decompose(psi, Some(floor * rho_max(psi)))?;
    let b = decompose(&next, Some(floor * rho_max(&next)))?;
    let r = madelung_residuals(&a, &b, &s.potential)?;
    Ok((r.hj_max(), r.continuity_max()))
}

/// Streams one rung's propagation, transporting Bohm particles and calling
/// `visit(k, ψ, fields, integrator)` on every output.
fn stream_rung(
    s: &Scenario,
    plan: &RungPlan,
    psi0: &WaveField,
    mask: Option<RealField>,
    initial: &[Point],
    mut visit: impl FnMut(usize, &WaveField, &MadelungFields, Option<&EnsembleIntegrator>) -> Result<(), ExperimentError>,
) -> Result<(crate::solver::RunSummary, MadelungFields, TrajectoryEnsemble), ExperimentError> {
    let prop = propagator(s, plan, mask.clone())?;
    let spin = s.spin.then_some([0.0, 0.0, 1.0]);
    let kind = if s.spin { TrajectoryKind::BohmSpin } else { TrajectoryKind::Bohm };
    let mut integrator: Option<(VelocityFieldSample, EnsembleIntegrator)> = None;
    let mut last: Option<MadelungFields> = None;
    let mut failure: Option<ExperimentError> = None;
    let mut k = 0usize;
    let summary = prop.run(psi0, s.t_final, &[Observer::Norm, Observer::Energy], |psi, _| {
        if failure.is_some() {
            return;
        }
        let mut step = || -> Result<(), ExperimentError> {
            let fields = decompose(psi, Some(s.analysis.rho_floor * rho_max(psi)))?;
            if !initial.is_empty() {
                let mut v = velocity_field(&fields, spin)?;
                if let Some(m) = &mask {
                    v.exclude(m)?;
                }
                integrator = Some(match integrator.take() {
                    None => {
                        let ens = EnsembleIntegrator::new(kind, initial, &v, s.substeps);
                        (v, ens)
                    }
                    Some((prev, mut ens)) => {
                        ens.advance(&prev, &v);
                        (v, ens)
                    }
                });
            }
            visit(k, psi, &fields, integrator.as_ref().map(|p| &p.1))?;
            last = Some(fields);
            Ok(())
        };
        if let Err(e) = step() {
            failure = Some(e);
        }
        k += 1;
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let bohm = integrator.map(|(_, e)| e.finish()).unwrap_or_else(|| TrajectoryEnsemble::new(kind, s.dim));
    Ok((summary, last.expect("at least one snapshot"), bohm))
}

fn field_dump(name: String, fields: &MadelungFields) -> FieldDump {
    FieldDump {
        name,
        grid: *fields.grid(),
        time: fields.time,
        columns: vec![
            ("rho".into(), fields.rho.values().to_vec()),
            ("action".into(), fields.action.values().to_vec()),
            ("qpotential".into(), fields.qpotential.values().to_vec()),
        ],
    }
}

fn base_report(plan: &RungPlan, summary: &crate::solver::RunSummary, residuals: (f64, f64)) -> RungReport {
    let (norm_drift, energy_drift) = drifts(&summary.observations);
    RungReport {
        divisor: plan.divisor,
        hbar: plan.hbar,
        extent: plan.extent.clone(),
        points: plan.points.clone(),
        wavelength: plan.wavelength,
        dt: plan.dt,
        steps: summary.steps,
        norm_drift,
        energy_drift,
        absorbed_probability: summary.absorbed_probability,
        madelung_hj_residual: residuals.0,
        madelung_continuity_residual: residuals.1,
        statistical: None,
        determinist: None,
        double_slit: None,
    }
}

fn run_rungs(
    s: &Scenario,
    plans: &[RungPlan],
    jobs: usize,
    f: impl Fn(usize, &RungPlan) -> Result<RungOutput, ExperimentError> + Sync,
) -> Result<Vec<RungOutput>, ExperimentError> {
    let _ = s;
    let work = || plans.par_iter().enumerate().map(|(i, p)| f(i, p)).collect::<Result<Vec<_>, _>>();
    if jobs == 0 {
        work()
    } else {
        pool(jobs)?.install(work)
    }
}

fn order(metric: &str, hbar: &[f64], values: &[Option<f64>]) -> OrderEstimate {
    let (x, y): (Vec<f64>, Vec<f64>) = hbar.iter().zip(values).filter_map(|(h, v)| v.map(|v| (*h, v.abs()))).unzip();
    OrderEstimate { metric: metric.to_string(), fit: loglog_slope(&x, &y) }
}

fn assemble(s: &Scenario, plans: Vec<RungPlan>, rungs: Vec<RungOutput>, orders: Vec<OrderEstimate>, classical: Option<(ClassicalReport, TrajectoryEnsemble)>) -> SweepOutput {
    let mut reports = Vec::new();
    let mut bohm = Vec::new();
    let mut fields = Vec::new();
    let mut wall_seconds = Vec::new();
    for r in rungs {
        reports.push(r.report);
        bohm.push(r.bohm);
        fields.push(r.fields);
        wall_seconds.push(r.seconds);
    }
    let (classical_report, classical_paths) = match classical {
        Some((r, p)) => (Some(r), Some(p)),
        None => (None, None),
    };
    SweepOutput {
        report: ConvergenceReport {
            scenario: s.name.clone(),
            kind: s.kind,
            seed: s.seed,
            times: output_times(s),
            rungs: reports,
            orders,
            classical: classical_report,
        },
        plans,
        bohm,
        classical: classical_paths,
        fields,
        wall_seconds,
    }
}

// ------------------------------------------------------------- statistical

fn minplus_at_final(s: &Scenario, action: &dyn InitialAction, extent: &[f64]) -> Result<(MinPlusSolution, ClassicalReport), ExperimentError> {
    let n = s.analysis.minplus_points;
    let points = vec![n; s.dim];
    let grid = Grid::new(s.dim, extent, &points)?;
    let search = SearchGrid::covering(&grid, s.analysis.search_refine);
    let t = s.t_final;
    let delta = 1e-3 * t;
    let before = hopf_lax_solve(action, &s.potential, t - delta, &grid, &search)?;
    let center = hopf_lax_solve(action, &s.potential, t, &grid, &search)?;
    let after = hopf_lax_solve(action, &s.potential, t + delta, &grid, &search)?;
    let residual = hj_residual(&before, &center, &after, &s.potential)?;
    let report = ClassicalReport {
        time: t,
        minplus_points: points,
        minplus_hj_residual: nan_max_abs(residual.values()),
        flagged_nodes: center.flags.iter().filter(|f| **f != NodeFlag::Ok).count(),
    };
    Ok((center, report))
}

/// `(max - min) / 2` of the differences: the sup distance after removing the
/// best constant.
fn sup_mod_constant(diffs: impl Iterator<Item = f64>) -> Option<f64> {
    let (lo, hi) = diffs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    (hi >= lo).then_some(0.5 * (hi - lo))
}

fn action_distance(fields: &MadelungFields, minplus: &MinPlusSolution, region: f64) -> Option<f64> {
    let grid = *fields.grid();
    let rho = fields.rho.values();
    let threshold = region * fields.rho.max();
    let action = fields.action.values();
    sup_mod_constant((0..minplus.grid().len()).filter_map(|i| {
        if minplus.flags[i] != NodeFlag::Ok {
            return None;
        }
        let x = minplus.grid().node(i);
        let near = grid.nearest(x);
        if fields.component[near] != 1 || multilinear(&grid, rho, x)? < threshold {
            return None;
        }
        let sq = multilinear(&grid, action, x)?;
        sq.is_finite().then(|| sq - minplus.action.values()[i])
    }))
}

pub fn run_statistical_sweep(s: &Scenario, jobs: usize) -> Result<SweepOutput, ExperimentError> {
    let plans = s.plan()?;
    let packet = packet(s)?;
    let grid0 = plans[0].grid;
    let rho0 = RealField::from_fn(grid0, FieldUnits::Density, |x| packet.density(s.dim, x))?;
    let initial = sample_positions(&rho0, s.particles, s.seed, SamplingMode::Random)?;
    let times = output_times(s);
    let classical = classical_paths(&initial, &packet.action, &s.potential, &times)?;
    let minplus = if s.potential.has_classical_action() { Some(minplus_at_final(s, &packet.action, &plans[0].extent)?) } else { None };

    let rungs = run_rungs(s, &plans, jobs, |i, plan| {
        let start = Instant::now();
        let grid = plan.grid;
        let psi0 = WaveField::from_density_action(grid, plan.hbar, s.mass(), |x| packet.density(s.dim, x), |x| packet.action.value(x))?;
        let (summary, last, bohm) = stream_rung(s, plan, &psi0, absorber(s, &grid), &initial, |_, _, _, _| Ok(()))?;
        let residuals = final_residuals(s, plan, &summary.final_field)?;

        let deviations: Vec<Option<f64>> = (0..bohm.particle_count())
            .map(|p| if bohm.absorbed_at[p] == Some(0) { None } else { sup_deviation(&bohm, p, &classical, p) })
            .collect();
        let live: Vec<f64> = deviations.iter().flatten().copied().collect();

        let density_l1 = if s.density_samples >= MIN_CLASSICAL_PARTICLES {
            let rho0_rung = RealField::from_fn(grid, FieldUnits::Density, |x| packet.density(s.dim, x))?;
            let mode = if s.dim == 1 { SamplingMode::Stratified } else { SamplingMode::Random };
            let ens = evolve_classical_density(
                &rho0_rung,
                &packet.action,
                &s.potential,
                &[0.0, s.t_final],
                s.density_samples,
                s.seed.wrapping_add(1),
                mode,
            )?;
            Some(binned_l1(&grid, last.rho.values(), ens.densities[1].rho.values(), s.analysis.bin_cells))
        } else {
            None
        };
        let action_distance = minplus.as_ref().and_then(|(mp, _)| action_distance(&last, mp, s.analysis.action_region));

        let mut report = base_report(plan, &summary, residuals);
        report.statistical = Some(StatisticalMetrics {
            median_deviation: median(&live).unwrap_or(f64::NAN),
            max_deviation: live.iter().copied().fold(0.0, f64::max),
            absorbed_particles: bohm.absorbed_at.iter().filter(|a| a.is_some()).count(),
            particle_deviation: deviations,
            density_l1,
            action_distance,
        });
        Ok(RungOutput { report, bohm, fields: field_dump(format!("rung{i}_final"), &last), seconds: start.elapsed().as_secs_f64() })
    })?;

    let hbar: Vec<f64> = plans.iter().map(|p| p.hbar).collect();
    let metric = |f: &dyn Fn(&StatisticalMetrics) -> Option<f64>| -> Vec<Option<f64>> {
        rungs.iter().map(|r| r.report.statistical.as_ref().and_then(f)).collect()
    };
    let orders = vec![
        order("median_deviation", &hbar, &metric(&|m| Some(m.median_deviation))),
        order("density_l1", &hbar, &metric(&|m| m.density_l1)),
        order("action_distance", &hbar, &metric(&|m| m.action_distance)),
    ];
    let classical_out = minplus.map(|(_, r)| (r, classical.clone()));
    let mut out = assemble(s, plans, rungs, orders, classical_out);
    if out.classical.is_none() {
        out.classical = Some(classical);
    }
    Ok(out)
}

// ------------------------------------------------------------- determinist

fn weak_battery(dim: usize, center: Point, width: f64) -> [Box<dyn Fn(Point) -> f64 + Sync>; 5] {
    let y = move |p: Point| if dim == 2 { p[1] } else { 0.0 };
    [
        Box::new(move |p| p[0] * p[0] + y(p) * y(p)),
        Box::new(move |p| p[0].cos() * y(p).cos()),
        Box::new(move |p| (0.5 * (p[0] + y(p))).exp()),
        Box::new(move |p| p[0].powi(3) + y(p).powi(3)),
        Box::new(move |p| {
            let d = [p[0] - center[0], y(p) - if dim == 2 { center[1] } else { 0.0 }];
            (-(d[0] * d[0] + d[1] * d[1]) / (2.0 * width * width)).exp()
        }),
    ]
}

/// `Q(x) = -ħ²/2m Δ|ψ| / |ψ|` at an off-grid point by spectral interpolation.
fn quantum_potential_at(psi: &WaveField, x: Point) -> f64 {
    let grid = *psi.grid();
    let amp = RealField::new(grid, psi.values().iter().map(|c| c.norm()).collect(), FieldUnits::Dimensionless).expect("grid length");
    let lap = laplacian(&amp);
    -psi.hbar() * psi.hbar() / (2.0 * psi.mass()) * lap.interpolate_spectral(x) / amp.interpolate_spectral(x)
}

fn q_off_path_error(fields: &MadelungFields, cs: &CoherentState, t: f64) -> f64 {
    let hw = cs.hbar * cs.omega;
    let grid = *fields.grid();
    (0..grid.len())
        .filter(|&i| fields.is_defined(i))
        .map(|i| {
            let exact = cs.quantum_potential(grid.node(i), t);
            (fields.qpotential.values()[i] - exact).abs() / exact.abs().max(hw)
        })
        .fold(0.0, f64::max)
}

fn action_error(fields: &MadelungFields, cs: &CoherentState, t: f64) -> f64 {
    let grid = *fields.grid();
    sup_mod_constant(
        (0..grid.len())
            .filter(|&i| fields.component[i] == 1)
            .map(|i| fields.action.values()[i] - cs.action(grid.node(i), t)),
    )
    .unwrap_or(f64::NAN)
}

/// Global phase of `ψ` relative to the limiting action, unwrapped in time
/// at the density maximum.
struct PhaseTracker {
    unwrapped: f64,
    raw: f64,
    started: bool,
}

impl PhaseTracker {
    fn relative_phase(psi: &WaveField, cs: &CoherentState, i: usize) -> f64 {
        let t = psi.time();
        let lim = cs.limit_fields(t);
        wrap_phase(psi.values()[i].arg() - lim.action(psi.grid().node(i)) / cs.hbar)
    }

    fn update(&mut self, psi: &WaveField, cs: &CoherentState) {
        let anchor = argmax_density(psi);
        let raw = Self::relative_phase(psi, cs, anchor);
        if self.started {
            self.unwrapped += wrap_phase(raw - self.raw);
        } else {
            self.unwrapped = raw;
            self.started = true;
        }
        self.raw = raw;
    }

    /// `S^ħ(x) - S_limit(x)` at node `i`.
    fn gap(&self, psi: &WaveField, cs: &CoherentState, i: usize) -> f64 {
        cs.hbar * (self.unwrapped + wrap_phase(Self::relative_phase(psi, cs, i) - self.raw))
    }
}

fn argmax_density(psi: &WaveField) -> usize {
    psi.values()
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, c)| if c.norm_sqr() > bv { (i, c.norm_sqr()) } else { (bi, bv) })
        .0
}

fn determinist_sample(s: &Scenario, cs: &CoherentState, psi: &WaveField, fields: &MadelungFields, tracker: &PhaseTracker) -> Result<DeterministSample, ExperimentError> {
    let t = psi.time();
    let grid = *psi.grid();
    let hw = cs.hbar * cs.omega;
    let xi = cs.center(t);
    let rho = psi.density();
    let density_linf = grid.nodes().zip(rho.values()).map(|(x, r)| (r - cs.density(x, t)).abs()).fold(0.0, f64::max);
    let floored = decompose(psi, Some(s.analysis.action_floor * rho_max(psi)))?;
    let exact = cs.wave_field(&grid, t)?;
    let exact_fields = decompose(&exact, Some(s.analysis.action_floor * rho_max(&exact)))?;
    let q_expected = 0.5 * cs.dim as f64 * hw;
    let q_on_path = quantum_potential_at(psi, xi);
    let battery = weak_battery(s.dim, xi, s.analysis.bump_width);
    let weak_errors = battery
        .iter()
        .map(|f| grid.nodes().zip(rho.values()).map(|(x, r)| f(x) * r).sum::<f64>() * grid.cell_volume() - f(xi))
        .collect();
    let dist = |x: Point| ((x[0] - xi[0]).powi(2) + (x[1] - xi[1]).powi(2)).sqrt();
    let mut window: Vec<usize> = (0..grid.len()).filter(|&i| dist(grid.node(i)) <= s.analysis.window).collect();
    if window.is_empty() {
        window.push(grid.nearest(xi));
    }
    let action_limit_gap = window.iter().map(|&i| tracker.gap(psi, cs, i).abs()).fold(0.0, f64::max);
    Ok(DeterministSample {
        time: t,
        density_linf,
        density_linf_relative: density_linf / cs.peak_density(),
        action_error: action_error(&floored, cs, t),
        action_error_decomposition_floor: action_error(fields, cs, t),
        q_on_path,
        q_on_path_error: (q_on_path - q_expected).abs() / hw,
        q_on_path_error_exact_state: (quantum_potential_at(&exact, xi) - q_expected).abs() / hw,
        q_off_path_error: q_off_path_error(&floored, cs, t),
        q_off_path_error_exact_state: q_off_path_error(&exact_fields, cs, t),
        weak_errors,
        action_limit_gap,
        zero_point_shift: q_expected * t,
    })
}

/// L1 distance between particle counts and `ρ^ħ` masses over
/// equal-probability bins of the exact marginals (4 per axis in 2D, 16 in
/// 1D).
fn equivariance(cs: &CoherentState, rho: &RealField, positions: &[Point], alive: &[bool], t: f64) -> EquivarianceSample {
    let dim = cs.dim;
    let per_axis = if dim == 1 { 16 } else { 4 };
    let xi = cs.center(t);
    let edges: Vec<Vec<f64>> = (0..dim).map(|a| normal_quantile_edges(xi[a], cs.sigma(), per_axis)).collect();
    let bounds = |a: usize, b: usize| {
        let lo = if b == 0 { f64::NEG_INFINITY } else { edges[a][b - 1] };
        let hi = if b + 1 == per_axis { f64::INFINITY } else { edges[a][b] };
        (lo.max(-1e300), hi.min(1e300))
    };
    let bins = if dim == 1 { per_axis } else { per_axis * per_axis };
    let mut counts = vec![0usize; bins];
    for (p, a) in positions.iter().zip(alive) {
        if !a {
            continue;
        }
        let bx = edges[0].partition_point(|e| *e <= p[0]);
        let b = if dim == 1 { bx } else { bx * per_axis + edges[1].partition_point(|e| *e <= p[1]) };
        counts[b] += 1;
    }
    let n = positions.len() as f64;
    let mut l1 = 0.0;
    for b in 0..bins {
        let (bx, by) = if dim == 1 { (b, 0) } else { (b / per_axis, b % per_axis) };
        let (x0, x1) = bounds(0, bx);
        let (y0, y1) = if dim == 1 { (-1e300, 1e300) } else { bounds(1, by) };
        let mass = rectangle_mass(rho, [x0, y0], [x1, y1]);
        l1 += (counts[b] as f64 / n - mass).abs();
    }
    EquivarianceSample { time: t, l1, bins, live_particles: alive.iter().filter(|a| **a).count() }
}

pub fn run_determinist_sweep(s: &Scenario, jobs: usize) -> Result<SweepOutput, ExperimentError> {
    let plans = s.plan()?;
    let samples = time_indices(s, &s.sample_times);
    let equi = time_indices(s, &s.equivariance_times);
    let times = output_times(s);

    let rungs = run_rungs(s, &plans, jobs, |i, plan| {
        let start = Instant::now();
        let cs = s.coherent_state(plan.hbar).ok_or(ScenarioError::InvalidValue {
            key: "coherent".into(),
            line: None,
            message: "determinist scenarios need a harmonic potential and [coherent] parameters".into(),
        })?;
        let mut psi0 = cs.wave_field(&plan.grid, 0.0)?;
        psi0.normalize();
        let initial = if s.particles > 0 { sample_positions(&psi0.density(), s.particles, s.seed, SamplingMode::Random)? } else { Vec::new() };
        let mut tracker = PhaseTracker { unwrapped: 0.0, raw: 0.0, started: false };
        let mut sample_out = Vec::new();
        let mut equi_out = Vec::new();
        let (summary, last, bohm) = stream_rung(s, plan, &psi0, None, &initial, |k, psi, fields, ens| {
            tracker.update(psi, &cs);
            if samples.contains(&k) {
                sample_out.push(determinist_sample(s, &cs, psi, fields, &tracker)?);
            }
            if let (true, Some(ens)) = (equi.contains(&k), ens) {
                equi_out.push(equivariance(&cs, &fields.rho, &ens.current_positions(), &ens.alive(), psi.time()));
            }
            Ok(())
        })?;
        let residuals = final_residuals(s, plan, &summary.final_field)?;
        let det = determinist_solution(&s.potential, cs.x0, cs.v0, &times)?;
        let g_gap = s.sample_times.iter().map(|&t| (cs.g_quadrature(t, 1e-13) - cs.g(t)).abs()).fold(0.0, f64::max);
        let mut report = base_report(plan, &summary, residuals);
        report.determinist = Some(DeterministMetrics {
            weak_functions: WEAK_FUNCTIONS.iter().map(|s| s.to_string()).collect(),
            samples: sample_out,
            equivariance: equi_out,
            limit_hj_residual: det.residual_max,
            g_quadrature_gap: g_gap,
        });
        Ok(RungOutput { report, bohm, fields: field_dump(format!("rung{i}_final"), &last), seconds: start.elapsed().as_secs_f64() })
    })?;

    let hbar: Vec<f64> = plans.iter().map(|p| p.hbar).collect();
    let last_sample = |r: &RungOutput| r.report.determinist.as_ref().and_then(|d| d.samples.last().cloned());
    let mut orders: Vec<OrderEstimate> = WEAK_FUNCTIONS
        .iter()
        .enumerate()
        .map(|(f, name)| order(&format!("weak_{name}"), &hbar, &rungs.iter().map(|r| last_sample(r).map(|x| x.weak_errors[f])).collect::<Vec<_>>()))
        .collect();
    orders.push(order("action_limit_gap", &hbar, &rungs.iter().map(|r| last_sample(r).map(|x| x.action_limit_gap)).collect::<Vec<_>>()));
    Ok(assemble(s, plans, rungs, orders, None))
}

// ------------------------------------------------------------- double slit

fn slit_metrics(s: &Scenario, bohm: &TrajectoryEnsemble, exit_x: f64) -> DoubleSlitMetrics {
    let mut transmitted = 0;
    let mut reflected = 0;
    let mut absorbed_before = 0;
    let mut endpoints = Vec::new();
    let mut crossings = 0;
    let mut curvature_sum = 0.0;
    let mut curvature_n = 0usize;
    let mut straight_sum = 0.0;
    let n_times = bohm.times.len();
    for p in 0..bohm.particle_count() {
        let end = bohm.absorbed_at[p].unwrap_or(n_times).min(n_times);
        if end == 0 {
            absorbed_before += 1;
            continue;
        }
        let pos = &bohm.positions[p][..end];
        let vel = &bohm.velocities[p][..end];
        if pos.windows(2).any(|w| w[0][1] * w[1][1] < 0.0) {
            crossings += 1;
        }
        match pos.iter().position(|x| x[0] > exit_x) {
            Some(ke) => {
                transmitted += 1;
                endpoints.push(pos[end - 1][1]);
                for k in (ke + 1)..end.saturating_sub(1) {
                    let h = bohm.times[k + 1] - bohm.times[k - 1];
                    let a = [(vel[k + 1][0] - vel[k - 1][0]) / h, (vel[k + 1][1] - vel[k - 1][1]) / h];
                    let v = vel[k];
                    let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
                    if speed > 0.0 {
                        curvature_sum += (v[0] * a[1] - v[1] * a[0]).abs() / speed.powi(3);
                        curvature_n += 1;
                    }
                }
                let (xe, ve, te) = (pos[ke], vel[ke], bohm.times[ke]);
                let dev = (ke..end)
                    .map(|k| {
                        let dt = bohm.times[k] - te;
                        let line = [xe[0] + ve[0] * dt, xe[1] + ve[1] * dt];
                        ((pos[k][0] - line[0]).powi(2) + (pos[k][1] - line[1]).powi(2)).sqrt()
                    })
                    .fold(0.0, f64::max);
                straight_sum += dev;
            }
            None if bohm.absorbed_at[p].is_some() => absorbed_before += 1,
            None => reflected += 1,
        }
    }
    DoubleSlitMetrics {
        transmitted,
        reflected,
        absorbed_before_wall: absorbed_before,
        endpoint_clusters: gap_statistic(&endpoints, s.analysis.max_clusters, 20, s.seed),
        axis_crossings: crossings,
        vortices_at_end: 0,
        mean_curvature: if curvature_n > 0 { curvature_sum / curvature_n as f64 } else { f64::NAN },
        straight_line_deviation: if transmitted > 0 { straight_sum / transmitted as f64 } else { f64::NAN },
    }
}

pub fn run_double_slit(s: &Scenario, jobs: usize) -> Result<SweepOutput, ExperimentError> {
    let plans = s.plan()?;
    let packet = packet(s)?;
    let PotentialKind::DoubleSlit(geometry) = s.potential.kind else {
        return Err(ScenarioError::InvalidValue { key: "potential.kind".into(), line: None, message: "expected double_slit".into() }.into());
    };
    let exit_x = geometry.wall_position + 0.5 * geometry.wall_thickness + 2.0 * geometry.edge_width;
    let rungs = run_rungs(s, &plans, jobs, |i, plan| {
        let start = Instant::now();
        let grid = plan.grid;
        let rho0 = RealField::from_fn(grid, FieldUnits::Density, |x| packet.density(s.dim, x))?;
        let initial = sample_positions(&rho0, s.particles, s.seed, SamplingMode::Random)?;
        let psi0 = WaveField::from_density_action(grid, plan.hbar, s.mass(), |x| packet.density(s.dim, x), |x| packet.action.value(x))?;
        let (summary, last, bohm) = stream_rung(s, plan, &psi0, absorber(s, &grid), &initial, |_, _, _, _| Ok(()))?;
        let residuals = final_residuals(s, plan, &summary.final_field)?;
        let mut metrics = slit_metrics(s, &bohm, exit_x);
        metrics.vortices_at_end = last.vortices.len();
        let mut report = base_report(plan, &summary, residuals);
        report.double_slit = Some(metrics);
        Ok(RungOutput { report, bohm, fields: field_dump(format!("rung{i}_final"), &last), seconds: start.elapsed().as_secs_f64() })
    })?;
    let hbar: Vec<f64> = plans.iter().map(|p| p.hbar).collect();
    let curv: Vec<Option<f64>> = rungs.iter().map(|r| r.report.double_slit.as_ref().map(|d| d.mean_curvature)).collect();
    let orders = vec![order("mean_curvature", &hbar, &curv)];
    Ok(assemble(s, plans, rungs, orders, None))
}
