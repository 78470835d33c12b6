//! Bohmian velocity fields, ensemble integration and initial-position
//! sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{multilinear, Grid, GridError, Point, RealField};
use crate::madelung::MadelungFields;
use crate::trajectory::{TrajectoryEnsemble, TrajectoryKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BohmError {
    #[error("the spin term needs a 2D grid, got {dim}D")]
    SpinAxisUnsupported { dim: usize },
    #[error("spin axis {0:?} is not a unit vector normal to the plane")]
    SpinAxis([f64; 3]),
    #[error("rejection sampler accepted {accepted} of {requested} positions after {attempts} attempts")]
    Sampling { requested: usize, accepted: usize, attempts: usize },
    #[error("density has no positive mass")]
    EmptyDensity,
    #[error("stratified sampling is only available in 1D")]
    StratifiedDimension,
    #[error("velocity snapshots must be evenly spaced in time and share one grid")]
    Snapshots,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Grid-sampled velocity at one time with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFieldSample {
    grid: Grid,
    time: f64,
    components: Vec<Vec<f64>>,
    valid: Vec<bool>,
}

impl VelocityFieldSample {
    pub fn new(grid: Grid, time: f64, components: Vec<Vec<f64>>, valid: Vec<bool>) -> Result<Self, BohmError> {
        if components.len() != grid.dim() || components.iter().any(|c| c.len() != grid.len()) || valid.len() != grid.len() {
            return Err(BohmError::Grid(GridError::Mismatch));
        }
        Ok(VelocityFieldSample { grid, time, components, valid })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    /// Marks nodes where `mask < 1` as invalid (absorbing region).
    pub fn exclude(&mut self, mask: &RealField) -> Result<(), BohmError> {
        if mask.grid() != &self.grid {
            return Err(BohmError::Grid(GridError::Mismatch));
        }
        for (v, m) in self.valid.iter_mut().zip(mask.values()) {
            if *m < 1.0 {
                *v = false;
            }
        }
        Ok(())
    }

    /// Multilinear velocity at `p`; `None` unless every surrounding node is
    /// valid.
    pub fn at(&self, p: Point) -> Option<Point> {
        let (lower, _) = self.grid.locate(p)?;
        let corners: &[[usize; 2]] = if self.grid.dim() == 1 { &[[0, 0], [1, 0]] } else { &[[0, 0], [0, 1], [1, 0], [1, 1]] };
        for c in corners {
            if !self.valid[self.grid.flatten([lower[0] + c[0], lower[1] + c[1]])] {
                return None;
            }
        }
        let mut v = [0.0; 2];
        for (axis, comp) in self.components.iter().enumerate() {
            v[axis] = multilinear(&self.grid, comp, p)?;
        }
        Some(v)
    }
}

/// `v = ∇S/m`, plus `(ħ/2m) ∇ln ρ × k` when a spin axis `k = ±ẑ` is given.
pub fn velocity_field(fields: &MadelungFields, spin_axis: Option<[f64; 3]>) -> Result<VelocityFieldSample, BohmError> {
    let grid = *fields.grid();
    let sign = match spin_axis {
        None => None,
        Some(_) if grid.dim() != 2 => return Err(BohmError::SpinAxisUnsupported { dim: grid.dim() }),
        Some(k) if k[0].abs() < 1e-12 && k[1].abs() < 1e-12 && (k[2].abs() - 1.0).abs() < 1e-12 => Some(k[2].signum()),
        Some(k) => return Err(BohmError::SpinAxis(k)),
    };
    let valid: Vec<bool> = (0..grid.len()).map(|i| fields.is_defined(i)).collect();
    let mut components: Vec<Vec<f64>> = fields
        .action_gradient
        .iter()
        .map(|g| g.values().iter().map(|v| if v.is_nan() { 0.0 } else { v / fields.mass }).collect())
        .collect();
    if let Some(s) = sign {
        let c = fields.hbar / (2.0 * fields.mass);
        let lx = fields.log_density_gradient[0].values();
        let ly = fields.log_density_gradient[1].values();
        for i in 0..grid.len() {
            if valid[i] {
                // (a × k) for in-plane a and k = s ẑ
                components[0][i] += c * s * ly[i];
                components[1][i] -= c * s * lx[i];
            }
        }
    }
    VelocityFieldSample::new(grid, fields.time, components, valid)
}

#[derive(Debug, Clone, Copy)]
struct Particle {
    position: Point,
    alive: bool,
}

/// Streaming RK4 integrator: feed consecutive velocity snapshots with
/// [`EnsembleIntegrator::advance`], then [`EnsembleIntegrator::finish`].
#[derive(Debug, Clone)]
pub struct EnsembleIntegrator {
    kind: TrajectoryKind,
    dim: usize,
    substeps: usize,
    times: Vec<f64>,
    particles: Vec<Particle>,
    positions: Vec<Vec<Point>>,
    velocities: Vec<Vec<Point>>,
    absorbed_at: Vec<Option<usize>>,
}

impl EnsembleIntegrator {
    pub fn new(kind: TrajectoryKind, initial: &[Point], first: &VelocityFieldSample, substeps: usize) -> Self {
        let mut out = EnsembleIntegrator {
            kind,
            dim: first.grid().dim(),
            substeps: substeps.max(1),
            times: vec![first.time()],
            particles: Vec::with_capacity(initial.len()),
            positions: Vec::with_capacity(initial.len()),
            velocities: Vec::with_capacity(initial.len()),
            absorbed_at: vec![None; initial.len()],
        };
        for (p, &x) in initial.iter().enumerate() {
            let v = first.at(x);
            if v.is_none() {
                out.absorbed_at[p] = Some(0);
            }
            out.particles.push(Particle { position: x, alive: v.is_some() });
            out.positions.push(vec![x]);
            out.velocities.push(vec![v.unwrap_or([0.0; 2])]);
        }
        out
    }

    pub fn particle_count(&self) -> usize {
        self.particles.len()
    }

    pub fn current_positions(&self) -> Vec<Point> {
        self.particles.iter().map(|p| p.position).collect()
    }

    /// Whether each particle is still being transported.
    pub fn alive(&self) -> Vec<bool> {
        self.particles.iter().map(|p| p.alive).collect()
    }

    /// Advances every live particle from `prev.time()` to `next.time()`.
    pub fn advance(&mut self, prev: &VelocityFieldSample, next: &VelocityFieldSample) {
        let (ta, tb) = (prev.time(), next.time());
        let h = (tb - ta) / self.substeps as f64;
        let substeps = self.substeps;
        let velocity = |x: Point, t: f64| -> Option<Point> {
            let theta = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            let va = prev.at(x)?;
            let vb = next.at(x)?;
            Some([(1.0 - theta) * va[0] + theta * vb[0], (1.0 - theta) * va[1] + theta * vb[1]])
        };
        let k = self.times.len();
        let results: Vec<(Particle, Point)> = self
            .particles
            .par_iter()
            .map(|particle| {
                if !particle.alive {
                    return (*particle, [0.0; 2]);
                }
                let mut x = particle.position;
                for s in 0..substeps {
                    let t = ta + s as f64 * h;
                    match rk4(&velocity, x, t, h) {
                        Some(nx) => x = nx,
                        None => return (Particle { position: x, alive: false }, [0.0; 2]),
                    }
                }
                match next.at(x) {
                    Some(v) => (Particle { position: x, alive: true }, v),
                    None => (Particle { position: x, alive: false }, [0.0; 2]),
                }
            })
            .collect();
        for (p, (particle, v)) in results.into_iter().enumerate() {
            let was_alive = self.particles[p].alive;
            if was_alive && !particle.alive {
                self.absorbed_at[p] = Some(k);
                // absorbed particles hold their last recorded position
                let last = *self.positions[p].last().expect("path is never empty");
                self.particles[p] = Particle { position: last, alive: false };
            } else {
                self.particles[p] = particle;
            }
            self.positions[p].push(self.particles[p].position);
            self.velocities[p].push(v);
        }
        self.times.push(tb);
    }

    pub fn finish(self) -> TrajectoryEnsemble {
        let mut ensemble = TrajectoryEnsemble::new(self.kind, self.dim);
        ensemble.times = self.times;
        for ((pos, vel), absorbed) in self.positions.into_iter().zip(self.velocities).zip(self.absorbed_at) {
            ensemble.push_path(pos, vel, absorbed);
        }
        ensemble
    }
}

fn rk4(v: &impl Fn(Point, f64) -> Option<Point>, x: Point, t: f64, h: f64) -> Option<Point> {
    let add = |a: Point, b: Point, s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
    let k1 = v(x, t)?;
    let k2 = v(add(x, k1, 0.5 * h), t + 0.5 * h)?;
    let k3 = v(add(x, k2, 0.5 * h), t + 0.5 * h)?;
    let k4 = v(add(x, k3, h), t + h)?;
    Some([
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ])
}

/// Integrates an ensemble through an in-memory, evenly spaced snapshot
/// sequence.
pub fn integrate_ensemble(
    initial: &[Point],
    snapshots: &[VelocityFieldSample],
    kind: TrajectoryKind,
    substeps: usize,
) -> Result<TrajectoryEnsemble, BohmError> {
    let first = snapshots.first().ok_or(BohmError::Snapshots)?;
    if snapshots.len() > 1 {
        let dt = snapshots[1].time() - snapshots[0].time();
        for w in snapshots.windows(2) {
            let step = w[1].time() - w[0].time();
            if !(step > 0.0) || (step - dt).abs() > 1e-9 * dt || w[1].grid() != first.grid() {
                return Err(BohmError::Snapshots);
            }
        }
    }
    let mut integrator = EnsembleIntegrator::new(kind, initial, first, substeps);
    for w in snapshots.windows(2) {
        integrator.advance(&w[0], &w[1]);
    }
    Ok(integrator.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Random,
    /// One draw per equal-mass stratum (1D only).
    Stratified,
}

/// Draws `n` positions from `rho0` with a seeded generator.
///
/// 1D: inverse CDF of the piecewise-constant cell masses (node `i` owns
/// `[x_i - dx/2, x_i + dx/2)`). 2D: rejection sampling on the bilinear
/// interpolant inside the box of nodes with `ρ ≥ 1e-14 max ρ`.
pub fn sample_initial_positions(rho0: &RealField, n: usize, seed: u64) -> Result<Vec<Point>, BohmError> {
    sample_positions(rho0, n, seed, SamplingMode::Random)
}

pub fn sample_positions(rho0: &RealField, n: usize, seed: u64, mode: SamplingMode) -> Result<Vec<Point>, BohmError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let grid = *rho0.grid();
    let values = rho0.values();
    let max = rho0.max();
    if !(max > 0.0) {
        return Err(BohmError::EmptyDensity);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if grid.dim() == 1 {
        let dx = grid.spacing(0);
        let mut cdf = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        for v in values {
            acc += v.max(0.0);
            cdf.push(acc);
        }
        let total = acc;
        let draw = |u: f64| -> Point {
            let target = u * total;
            let i = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
            let start = if i == 0 { 0.0 } else { cdf[i - 1] };
            let frac = if values[i] > 0.0 { ((target - start) / values[i]).clamp(0.0, 1.0) } else { 0.5 };
            [grid.coordinate(0, i) - 0.5 * dx + frac * dx, 0.0]
        };
        return Ok(match mode {
            SamplingMode::Random => (0..n).map(|_| draw(rng.gen::<f64>())).collect(),
            SamplingMode::Stratified => (0..n).map(|k| draw((k as f64 + rng.gen::<f64>()) / n as f64)).collect(),
        });
    }
    if mode == SamplingMode::Stratified {
        return Err(BohmError::StratifiedDimension);
    }
    let threshold = 1e-14 * max;
    let (mut lo, mut hi) = ([usize::MAX; 2], [0usize; 2]);
    for (i, v) in values.iter().enumerate() {
        if *v >= threshold {
            let idx = grid.unflatten(i);
            for a in 0..2 {
                lo[a] = lo[a].min(idx[a]);
                hi[a] = hi[a].max(idx[a]);
            }
        }
    }
    let span: Vec<(f64, f64)> = (0..2)
        .map(|a| {
            let l = lo[a].saturating_sub(1);
            let h = (hi[a] + 1).min(grid.points(a) - 1);
            (grid.coordinate(a, l), grid.coordinate(a, h))
        })
        .collect();
    let max_attempts = 10_000 * n + 1_000_000;
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        if attempts >= max_attempts {
            return Err(BohmError::Sampling { requested: n, accepted: out.len(), attempts });
        }
        attempts += 1;
        let p = [rng.gen_range(span[0].0..span[0].1), rng.gen_range(span[1].0..span[1].1)];
        let density = multilinear(&grid, values, p).unwrap_or(0.0);
        if rng.gen::<f64>() * max < density {
            out.push(p);
        }
    }
    Ok(out)
}
