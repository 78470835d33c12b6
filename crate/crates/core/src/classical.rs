//! Classical limits: the min-plus (Hopf–Lax) action, its Hamilton–Jacobi
//! residual, ensemble transport of a classical density, and the single-path
//! determinist solution of the oscillator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bohm::{sample_positions, BohmError, SamplingMode};
use crate::coherent::adaptive_simpson;
use crate::grid::{FieldUnits, Grid, GridError, Point, RealField};
use crate::potentials::{PotentialError, PotentialKind, PotentialSpec};
use crate::trajectory::{TrajectoryEnsemble, TrajectoryKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassicalError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Sampling(#[from] BohmError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("time {time} is at or beyond the first caustic (ωt ≥ π for ω = {omega})")]
    PastCaustic { omega: f64, time: f64 },
    #[error("search grid needs at least 3 points per axis and a positive span")]
    SearchGrid,
    #[error("hamilton-jacobi residual needs solutions at t-δ, t, t+δ on one grid with equal spacing")]
    ResidualStencil,
    #[error("{0} needs a harmonic potential")]
    NotHarmonic(&'static str),
    #[error("classical ensemble needs at least {min} particles, got {got}")]
    TooFewParticles { min: usize, got: usize },
}

/// Initial action `S0` with its gradient.
pub trait InitialAction: Sync {
    fn value(&self, x: Point) -> f64;
    fn gradient(&self, x: Point) -> Point;
}

/// `S0(x) = m v·x + ½ c |x - x_c|²`; convex for `c ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearChirpAction {
    pub mass: f64,
    pub velocity: Point,
    pub chirp: f64,
    pub center: Point,
}

impl LinearChirpAction {
    pub fn plane_wave(mass: f64, velocity: Point) -> Self {
        LinearChirpAction { mass, velocity, chirp: 0.0, center: [0.0; 2] }
    }
}

impl InitialAction for LinearChirpAction {
    fn value(&self, x: Point) -> f64 {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        self.mass * (self.velocity[0] * x[0] + self.velocity[1] * x[1]) + 0.5 * self.chirp * (d[0] * d[0] + d[1] * d[1])
    }

    fn gradient(&self, x: Point) -> Point {
        [
            self.mass * self.velocity[0] + self.chirp * (x[0] - self.center[0]),
            self.mass * self.velocity[1] + self.chirp * (x[1] - self.center[1]),
        ]
    }
}

/// Closure-backed initial action.
pub struct FnAction<F, G> {
    pub value: F,
    pub gradient: G,
}

impl<F, G> InitialAction for FnAction<F, G>
where
    F: Fn(Point) -> f64 + Sync,
    G: Fn(Point) -> Point + Sync,
{
    fn value(&self, x: Point) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: Point) -> Point {
        (self.gradient)(x)
    }
}

/// Sampled initial action, interpolated multilinearly.
impl InitialAction for RealField {
    fn value(&self, x: Point) -> f64 {
        self.interpolate(x).unwrap_or(f64::INFINITY)
    }

    fn gradient(&self, x: Point) -> Point {
        let mut g = [0.0; 2];
        for (axis, slot) in g.iter_mut().enumerate().take(self.grid().dim()) {
            let h = 0.5 * self.grid().spacing(axis);
            let mut a = x;
            let mut b = x;
            a[axis] -= h;
            b[axis] += h;
            *slot = (InitialAction::value(self, b) - InitialAction::value(self, a)) / (2.0 * h);
        }
        g
    }
}

/// Rectangular lattice of candidate starting points (not periodic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub dim: usize,
    pub lower: Point,
    pub upper: Point,
    pub points: [usize; 2],
}

impl SearchGrid {
    pub fn new_1d(lower: f64, upper: f64, points: usize) -> Result<Self, ClassicalError> {
        Self::new(1, [lower, 0.0], [upper, 0.0], [points, 1])
    }

    pub fn new_2d(lower: Point, upper: Point, points: [usize; 2]) -> Result<Self, ClassicalError> {
        Self::new(2, lower, upper, points)
    }

    fn new(dim: usize, lower: Point, upper: Point, points: [usize; 2]) -> Result<Self, ClassicalError> {
        for a in 0..dim {
            if points[a] < 3 || !(upper[a] > lower[a]) || !lower[a].is_finite() || !upper[a].is_finite() {
                return Err(ClassicalError::SearchGrid);
            }
        }
        Ok(SearchGrid { dim, lower, upper, points })
    }

    /// Search lattice covering the node span of `grid` at `refine` times its
    /// resolution.
    pub fn covering(grid: &Grid, refine: usize) -> Self {
        let mut lower = [0.0; 2];
        let mut upper = [0.0; 2];
        let mut points = [1usize; 2];
        for a in 0..grid.dim() {
            let n = grid.points(a);
            lower[a] = grid.coordinate(a, 0);
            upper[a] = grid.coordinate(a, n - 1);
            points[a] = (n - 1) * refine.max(1) + 1;
        }
        SearchGrid { dim: grid.dim(), lower, upper, points }
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.points[axis] - 1) as f64
    }

    pub fn len(&self) -> usize {
        if self.dim == 1 {
            self.points[0]
        } else {
            self.points[0] * self.points[1]
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + i as f64 * self.spacing(axis)
    }

    pub fn node(&self, index: usize) -> Point {
        if self.dim == 1 {
            [self.coord(0, index), 0.0]
        } else {
            let n1 = self.points[1];
            [self.coord(0, index / n1), self.coord(1, index % n1)]
        }
    }

    fn index(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.points[1] + idx[1]
        }
    }

    fn unindex(&self, index: usize) -> [usize; 2] {
        if self.dim == 1 {
            [index, 0]
        } else {
            [index / self.points[1], index % self.points[1]]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeFlag {
    Ok,
    /// Two well-separated starting points give the same action within
    /// tolerance (crossing characteristics).
    Multivalued,
    /// The minimizer sits on the edge of the search lattice.
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSolution {
    pub value: f64,
    pub argmin: Point,
    pub flag: NodeFlag,
}

/// Relative action gap below which two separated minima count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

fn check_time(spec: &PotentialSpec, t: f64) -> Result<(), ClassicalError> {
    if !(t > 0.0) {
        return Err(PotentialError::NonPositiveTime(t).into());
    }
    if let PotentialKind::Harmonic { omega } = spec.kind {
        if omega * t >= std::f64::consts::PI {
            return Err(ClassicalError::PastCaustic { omega, time: t });
        }
    }
    if !spec.has_classical_action() {
        return Err(PotentialError::Unsupported(spec.kind.name()).into());
    }
    Ok(())
}

fn objective<'a>(s0: &'a dyn InitialAction, spec: &'a PotentialSpec, x: Point, t: f64) -> impl Fn(Point) -> f64 + 'a {
    move |x0| s0.value(x0) + spec.classical_action(x, t, x0).unwrap_or(f64::INFINITY)
}

/// Exhaustive minimum over the search lattice, no refinement.
pub fn hopf_lax_brute_force(
    s0: &dyn InitialAction,
    spec: &PotentialSpec,
    x: Point,
    t: f64,
    search: &SearchGrid,
) -> Result<(f64, Point), ClassicalError> {
    check_time(spec, t)?;
    let f = objective(s0, spec, x, t);
    let mut best = (f64::INFINITY, [0.0; 2]);
    for i in 0..search.len() {
        let p = search.node(i);
        let v = f(p);
        if v < best.0 {
            best = (v, p);
        }
    }
    Ok(best)
}

/// Brent's minimization of `f` on `[a, b]`.
pub(crate) fn brent(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a, b);
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-14;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1 * d.signum() };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

fn refine(f: &impl Fn(Point) -> f64, search: &SearchGrid, idx: [usize; 2]) -> (f64, Point) {
    let bracket = |axis: usize| {
        let lo = search.coord(axis, idx[axis].saturating_sub(1));
        let hi = search.coord(axis, (idx[axis] + 1).min(search.points[axis] - 1));
        (lo, hi)
    };
    let mut p = search.node(search.index(idx));
    let mut value = f(p);
    let sweeps = if search.dim == 1 { 1 } else { 60 };
    for _ in 0..sweeps {
        let before = p;
        for axis in 0..search.dim {
            let (lo, hi) = bracket(axis);
            let (x, fx) = brent(
                |s| {
                    let mut q = p;
                    q[axis] = s;
                    f(q)
                },
                lo,
                hi,
                1e-11,
                200,
            );
            if fx <= value {
                p[axis] = x;
                value = fx;
            }
        }
        if (p[0] - before[0]).abs() < 1e-13 && (p[1] - before[1]).abs() < 1e-13 {
            break;
        }
    }
    (value, p)
}

/// `min over x0 of S0(x0) + S_cl(x, t; x0)` by lattice scan plus Brent
/// refinement around the lattice minima.
pub fn hopf_lax_point(
    s0: &dyn InitialAction,
    spec: &PotentialSpec,
    x: Point,
    t: f64,
    search: &SearchGrid,
) -> Result<PointSolution, ClassicalError> {
    check_time(spec, t)?;
    let f = objective(s0, spec, x, t);
    let values: Vec<f64> = (0..search.len()).map(|i| f(search.node(i))).collect();
    // lattice local minima
    let mut minima: Vec<usize> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        let idx = search.unindex(i);
        let mut is_min = true;
        'axes: for axis in 0..search.dim {
            for delta in [-1i64, 1] {
                let j = idx[axis] as i64 + delta;
                if j < 0 || j >= search.points[axis] as i64 {
                    continue;
                }
                let mut n = idx;
                n[axis] = j as usize;
                if values[search.index(n)] < v {
                    is_min = false;
                    break 'axes;
                }
            }
        }
        if is_min {
            minima.push(i);
        }
    }
    if minima.is_empty() {
        return Err(PotentialError::Unsupported("non-finite action landscape").into());
    }
    minima.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    // plateaus produce runs of adjacent lattice minima; refine the best few
    let candidates: Vec<(f64, Point, [usize; 2])> = minima
        .iter()
        .take(4)
        .map(|&i| {
            let idx = search.unindex(i);
            let (v, p) = refine(&f, search, idx);
            (v, p, idx)
        })
        .collect();
    let best_value = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let tol = TIE_TOLERANCE * (1.0 + best_value.abs());
    let mut tied: Vec<&(f64, Point, [usize; 2])> = candidates.iter().filter(|c| c.0 - best_value <= tol).collect();
    tied.sort_by(|a, b| a.1[0].total_cmp(&b.1[0]).then(a.1[1].total_cmp(&b.1[1])));
    let chosen = tied[0];
    let separated = tied.iter().any(|c| {
        (0..search.dim).any(|a| (c.1[a] - chosen.1[a]).abs() > 2.0 * search.spacing(a))
    });
    let on_edge = (0..search.dim).any(|a| chosen.2[a] == 0 || chosen.2[a] == search.points[a] - 1);
    let flag = if separated {
        NodeFlag::Multivalued
    } else if on_edge {
        NodeFlag::Boundary
    } else {
        NodeFlag::Ok
    };
    Ok(PointSolution { value: chosen.0, argmin: chosen.1, flag })
}

/// Min-plus action on every node of `grid`.
#[derive(Debug, Clone)]
pub struct MinPlusSolution {
    pub time: f64,
    pub action: RealField,
    pub argmin: Vec<Point>,
    pub flags: Vec<NodeFlag>,
}

impl MinPlusSolution {
    pub fn grid(&self) -> &Grid {
        self.action.grid()
    }

    /// `∇_x S_cl(x, t; x0*)`: `m` times the velocity of the characteristic
    /// arriving at node `index`.
    pub fn characteristic_momentum(&self, index: usize, spec: &PotentialSpec) -> Result<Point, ClassicalError> {
        Ok(spec.classical_action_gradient(self.grid().node(index), self.time, self.argmin[index])?)
    }
}

pub fn hopf_lax_solve(
    s0: &dyn InitialAction,
    spec: &PotentialSpec,
    t: f64,
    grid: &Grid,
    search: &SearchGrid,
) -> Result<MinPlusSolution, ClassicalError> {
    check_time(spec, t)?;
    let results: Vec<PointSolution> =
        grid.nodes().collect::<Vec<_>>().par_iter().map(|&x| hopf_lax_point(s0, spec, x, t, search)).collect::<Result<_, _>>()?;
    let action = RealField::new(*grid, results.iter().map(|r| r.value).collect(), FieldUnits::Action)?;
    Ok(MinPlusSolution {
        time: t,
        action,
        argmin: results.iter().map(|r| r.argmin).collect(),
        flags: results.iter().map(|r| r.flag).collect(),
    })
}

/// Residual of `∂S/∂t + |∇S|²/2m + V = 0` at `center.time`, from
/// solutions at `t - δ`, `t`, `t + δ`. Fourth-order differences in space on
/// interior nodes; `NaN` on edges and near flagged nodes.
pub fn hj_residual(
    before: &MinPlusSolution,
    center: &MinPlusSolution,
    after: &MinPlusSolution,
    spec: &PotentialSpec,
) -> Result<RealField, ClassicalError> {
    let grid = *center.grid();
    let d1 = center.time - before.time;
    let d2 = after.time - center.time;
    if before.grid() != &grid || after.grid() != &grid || !(d1 > 0.0) || (d1 - d2).abs() > 1e-9 * d1 {
        return Err(ClassicalError::ResidualStencil);
    }
    let s = center.action.values();
    let mut out = vec![f64::NAN; grid.len()];
    'nodes: for i in 0..grid.len() {
        let idx = grid.unflatten(i);
        let mut grad = [0.0; 2];
        for axis in 0..grid.dim() {
            if idx[axis] < 2 || idx[axis] + 2 >= grid.points(axis) {
                continue 'nodes;
            }
            let at = |off: i64| {
                let mut j = idx;
                j[axis] = (j[axis] as i64 + off) as usize;
                grid.flatten(j)
            };
            for off in -2..=2 {
                let k = at(off);
                for sol in [before, center, after] {
                    if sol.flags[k] != NodeFlag::Ok {
                        continue 'nodes;
                    }
                }
            }
            let h = grid.spacing(axis);
            grad[axis] = (s[at(-2)] - 8.0 * s[at(-1)] + 8.0 * s[at(1)] - s[at(2)]) / (12.0 * h);
        }
        let dsdt = (after.action.values()[i] - before.action.values()[i]) / (2.0 * d1);
        let p = grid.node(i);
        out[i] = dsdt + (grad[0] * grad[0] + grad[1] * grad[1]) / (2.0 * spec.mass) + spec.value(p, center.time);
    }
    Ok(RealField::new(grid, out, FieldUnits::Energy)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    CharacteristicsHistogram,
}

#[derive(Debug, Clone)]
pub struct ClassicalDensity {
    pub time: f64,
    pub rho: RealField,
    pub method: DensityMethod,
}

/// Classical characteristics and the histogram densities they induce.
#[derive(Debug, Clone)]
pub struct ClassicalEnsemble {
    pub trajectories: TrajectoryEnsemble,
    pub densities: Vec<ClassicalDensity>,
}

/// Minimum ensemble size accepted by [`evolve_classical_density`].
pub const MIN_CLASSICAL_PARTICLES: usize = 1000;

/// Classical paths from `initial` with `v(0) = ∇S0(x0)/m`.
pub fn classical_paths(
    initial: &[Point],
    s0: &dyn InitialAction,
    spec: &PotentialSpec,
    times: &[f64],
) -> Result<TrajectoryEnsemble, ClassicalError> {
    let paths: Vec<TrajectoryEnsemble> = initial
        .par_iter()
        .map(|&x0| {
            let g = s0.gradient(x0);
            spec.classical_trajectory(x0, [g[0] / spec.mass, g[1] / spec.mass], times)
        })
        .collect::<Result<_, _>>()?;
    let dim = paths.iter().map(|p| p.dim).max().unwrap_or(1);
    let mut ensemble = TrajectoryEnsemble::new(TrajectoryKind::Classical, dim);
    ensemble.times = times.to_vec();
    for mut p in paths {
        ensemble.push_path(p.positions.remove(0), p.velocities.remove(0), None);
    }
    Ok(ensemble)
}

/// Nearest-node histogram of `positions`, normalized by `count · cell volume`.
pub fn histogram_density(grid: &Grid, positions: &[Point], count: usize) -> RealField {
    let mut values = vec![0.0; grid.len()];
    let weight = 1.0 / (count.max(1) as f64 * grid.cell_volume());
    for p in positions {
        let inside = (0..grid.dim()).all(|a| {
            let half = 0.5 * grid.extent(a);
            p[a] >= -half - 0.5 * grid.spacing(a) && p[a] < half - 0.5 * grid.spacing(a)
        });
        if inside {
            values[grid.nearest(*p)] += weight;
        }
    }
    RealField::new(*grid, values, FieldUnits::Density).expect("histogram matches grid")
}

/// Samples `n` particles from `rho0`, transports them along classical
/// characteristics and histograms the ensemble at every time of `times`
/// (which must start at 0).
pub fn evolve_classical_density(
    rho0: &RealField,
    s0: &dyn InitialAction,
    spec: &PotentialSpec,
    times: &[f64],
    n: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<ClassicalEnsemble, ClassicalError> {
    if n < MIN_CLASSICAL_PARTICLES {
        return Err(ClassicalError::TooFewParticles { min: MIN_CLASSICAL_PARTICLES, got: n });
    }
    let initial = sample_positions(rho0, n, seed, mode)?;
    let trajectories = classical_paths(&initial, s0, spec, times)?;
    let grid = *rho0.grid();
    let densities = (0..times.len())
        .map(|k| {
            let at: Vec<Point> = trajectories.positions.iter().map(|p| p[k]).collect();
            ClassicalDensity { time: times[k], rho: histogram_density(&grid, &at, n), method: DensityMethod::CharacteristicsHistogram }
        })
        .collect();
    Ok(ClassicalEnsemble { trajectories, densities })
}

/// Single classical path with its linear-in-`x` action
/// `S(x,t) = m ξ'(t)·x + g(t)`.
#[derive(Debug, Clone)]
pub struct DeterministSolution {
    pub path: TrajectoryEnsemble,
    /// `g(t_k)` by adaptive quadrature.
    pub g: Vec<f64>,
    /// `S(ξ(t_k), t_k)`.
    pub action_on_path: Vec<f64>,
    /// Largest `|∂S/∂t + |∇S|²/2m + V|` at `x = ξ(t_k)`.
    pub residual_max: f64,
}

pub fn determinist_solution(spec: &PotentialSpec, x0: Point, v0: Point, times: &[f64]) -> Result<DeterministSolution, ClassicalError> {
    let omega = spec.omega().ok_or(ClassicalError::NotHarmonic("determinist solution"))?;
    let m = spec.mass;
    let path = spec.classical_trajectory(x0, v0, times)?;
    let xi = |s: f64| {
        let (sn, c) = (omega * s).sin_cos();
        [x0[0] * c + v0[0] / omega * sn, x0[1] * c + v0[1] / omega * sn]
    };
    let vel = |s: f64| {
        let (sn, c) = (omega * s).sin_cos();
        [-x0[0] * omega * sn + v0[0] * c, -x0[1] * omega * sn + v0[1] * c]
    };
    let integrand = |s: f64| {
        let p = xi(s);
        let v = vel(s);
        0.5 * m * (omega * omega * (p[0] * p[0] + p[1] * p[1]) - (v[0] * v[0] + v[1] * v[1]))
    };
    let g_at = |t: f64| adaptive_simpson(&integrand, 0.0, t, 1e-14);
    let action = |x: Point, t: f64| {
        let v = vel(t);
        m * (v[0] * x[0] + v[1] * x[1]) + g_at(t)
    };
    let g: Vec<f64> = times.iter().map(|&t| g_at(t)).collect();
    let action_on_path: Vec<f64> = times.iter().map(|&t| action(xi(t), t)).collect();
    let h = 1e-3;
    let mut residual_max: f64 = 0.0;
    for &t in times {
        let x = xi(t);
        // five-point time derivative at fixed x
        let dsdt = (action(x, t - 2.0 * h) - 8.0 * action(x, t - h) + 8.0 * action(x, t + h) - action(x, t + 2.0 * h)) / (12.0 * h);
        let v = vel(t);
        let r = dsdt + 0.5 * m * (v[0] * v[0] + v[1] * v[1]) + spec.value(x, t);
        residual_max = residual_max.max(r.abs());
    }
    Ok(DeterministSolution { path, g, action_on_path, residual_max })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_parabola_vertex() {
        let (x, fx) = brent(|x| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-12, 100);
        assert!((x - 0.3).abs() < 1e-8 && (fx - 1.0).abs() < 1e-15);
    }

    #[test]
    fn free_plane_wave_closed_form() {
        let m = 1.5;
        let v0 = 0.8;
        let spec = PotentialSpec::free(m).unwrap();
        let s0 = LinearChirpAction::plane_wave(m, [v0, 0.0]);
        let search = SearchGrid::new_1d(-12.0, 12.0, 241).unwrap();
        let t = 1.7;
        for x in [-3.0, 0.0, 2.2] {
            let sol = hopf_lax_point(&s0, &spec, [x, 0.0], t, &search).unwrap();
            assert!((sol.value - (m * v0 * x - 0.5 * m * v0 * v0 * t)).abs() < 1e-10);
            assert!((sol.argmin[0] - (x - v0 * t)).abs() < 1e-6);
            assert_eq!(sol.flag, NodeFlag::Ok);
        }
    }

    #[test]
    fn short_time_recovers_initial_action() {
        let spec = PotentialSpec::harmonic(1.0, 1.0).unwrap();
        let s0 = LinearChirpAction { mass: 1.0, velocity: [0.3, -0.1], chirp: 0.5, center: [0.2, 0.0] };
        let search = SearchGrid::new_2d([-4.0, -4.0], [4.0, 4.0], [81, 81]).unwrap();
        let x = [0.7, -0.4];
        let sol = hopf_lax_point(&s0, &spec, x, 1e-4, &search).unwrap();
        assert!((sol.value - s0.value(x)).abs() < 1e-3);
        assert!((sol.argmin[0] - x[0]).abs() < 1e-3);
    }

    #[test]
    fn harmonic_quarter_period_matches_fine_scan() {
        let spec = PotentialSpec::harmonic(1.0, 1.0).unwrap();
        let s0 = FnAction { value: |_| 0.0, gradient: |_| [0.0; 2] };
        let t = std::f64::consts::FRAC_PI_4;
        let search = SearchGrid::new_1d(-5.0, 5.0, 101).unwrap();
        let fine = SearchGrid::new_1d(-5.0, 5.0, 2_000_001).unwrap();
        let sol = hopf_lax_point(&s0, &spec, [1.0, 0.0], t, &search).unwrap();
        let (bv, _) = hopf_lax_brute_force(&s0, &spec, [1.0, 0.0], t, &fine).unwrap();
        assert!((sol.value - bv).abs() < 1e-8);
        assert!(sol.value <= bv + 1e-14);
        // characteristics cross-check: S0 = 0 means the path starts at rest
        let x0 = sol.argmin;
        let path = spec.classical_trajectory(x0, [0.0; 2], &[0.0, t]).unwrap();
        assert!((path.positions[0][1][0] - 1.0).abs() < 1e-7);
        let s_path = spec.classical_action([1.0, 0.0], t, x0).unwrap();
        assert!((s_path - sol.value).abs() < 1e-12);
    }

    #[test]
    fn caustic_time_is_rejected() {
        let spec = PotentialSpec::harmonic(1.0, 2.0).unwrap();
        let s0 = LinearChirpAction::plane_wave(1.0, [0.0; 2]);
        let search = SearchGrid::new_1d(-1.0, 1.0, 11).unwrap();
        assert!(matches!(
            hopf_lax_point(&s0, &spec, [0.0; 2], 2.0, &search),
            Err(ClassicalError::PastCaustic { .. })
        ));
    }

    #[test]
    fn symmetric_double_well_is_flagged_and_breaks_ties_low() {
        let spec = PotentialSpec::free(1.0).unwrap();
        // two equal wells at ±2
        let s0 = FnAction { value: |p: Point| 5.0 * ((p[0] * p[0] - 4.0).powi(2)), gradient: |p: Point| [20.0 * p[0] * (p[0] * p[0] - 4.0), 0.0] };
        let search = SearchGrid::new_1d(-4.0, 4.0, 161).unwrap();
        let sol = hopf_lax_point(&s0, &spec, [0.0, 0.0], 1.0, &search).unwrap();
        assert_eq!(sol.flag, NodeFlag::Multivalued);
        assert!(sol.argmin[0] < 0.0);
    }

    #[test]
    fn min_plus_linearity() {
        let spec = PotentialSpec::free(1.0).unwrap();
        let a = LinearChirpAction { mass: 1.0, velocity: [0.5, 0.0], chirp: 1.0, center: [1.0, 0.0] };
        let b = LinearChirpAction { mass: 1.0, velocity: [-0.5, 0.0], chirp: 2.0, center: [-1.0, 0.0] };
        let c = 0.3;
        let combined = FnAction {
            value: |p: Point| (a.value(p) + c).min(b.value(p)),
            gradient: |p: Point| if a.value(p) + c <= b.value(p) { a.gradient(p) } else { b.gradient(p) },
        };
        let search = SearchGrid::new_1d(-8.0, 8.0, 1601).unwrap();
        for x in [-2.0, -0.5, 0.0, 0.6, 2.5] {
            let lhs = hopf_lax_point(&combined, &spec, [x, 0.0], 0.7, &search).unwrap().value;
            let ra = hopf_lax_point(&a, &spec, [x, 0.0], 0.7, &search).unwrap().value + c;
            let rb = hopf_lax_point(&b, &spec, [x, 0.0], 0.7, &search).unwrap().value;
            assert!((lhs - ra.min(rb)).abs() < 1e-7, "x={x}");
        }
    }

    #[test]
    fn semigroup_in_time() {
        let spec = PotentialSpec::harmonic(1.0, 1.0).unwrap();
        let s0 = LinearChirpAction { mass: 1.0, velocity: [0.2, 0.0], chirp: 0.8, center: [0.0; 2] };
        let inner = SearchGrid::new_1d(-6.0, 6.0, 241).unwrap();
        let (t1, t2) = (0.3, 0.4);
        let mid = FnAction {
            value: |p: Point| hopf_lax_point(&s0, &spec, p, t1, &inner).unwrap().value,
            gradient: |_| [0.0; 2],
        };
        let outer = SearchGrid::new_1d(-6.0, 6.0, 121).unwrap();
        for x in [-1.0, 0.0, 1.3] {
            let direct = hopf_lax_point(&s0, &spec, [x, 0.0], t1 + t2, &inner).unwrap().value;
            let composed = hopf_lax_point(&mid, &spec, [x, 0.0], t2, &outer).unwrap().value;
            assert!((direct - composed).abs() < 1e-7, "x={x}: {direct} vs {composed}");
        }
    }

    #[test]
    fn solution_is_a_lower_bound_and_gradient_matches_characteristic() {
        let spec = PotentialSpec::harmonic(1.0, 1.0).unwrap();
        let s0 = LinearChirpAction { mass: 1.0, velocity: [0.4, 0.0], chirp: 0.6, center: [0.5, 0.0] };
        let grid = Grid::new_1d(8.0, 64).unwrap();
        let search = SearchGrid::new_1d(-8.0, 8.0, 321).unwrap();
        let t = 0.9;
        let sol = hopf_lax_solve(&s0, &spec, t, &grid, &search).unwrap();
        for i in (0..grid.len()).step_by(5) {
            let x = grid.node(i);
            for j in (0..search.len()).step_by(13) {
                let x0 = search.node(j);
                assert!(sol.action.values()[i] <= s0.value(x0) + spec.classical_action(x, t, x0).unwrap() + 1e-12);
            }
        }
        let h = grid.spacing(0);
        let s = sol.action.values();
        for i in 10..54 {
            let fd = (s[i - 2] - 8.0 * s[i - 1] + 8.0 * s[i + 1] - s[i + 2]) / (12.0 * h);
            let p = sol.characteristic_momentum(i, &spec).unwrap();
            assert!((fd - p[0]).abs() < 1e-6, "node {i}");
        }
    }

    #[test]
    fn plane_wave_residual_and_refinement() {
        let spec = PotentialSpec::free(1.0).unwrap();
        let s0 = LinearChirpAction::plane_wave(1.0, [0.6, 0.0]);
        let grid = Grid::new_1d(8.0, 64).unwrap();
        let search = SearchGrid::new_1d(-10.0, 10.0, 201).unwrap();
        let (t, d) = (1.0, 1e-3);
        let sols: Vec<_> = [t - d, t, t + d].iter().map(|&s| hopf_lax_solve(&s0, &spec, s, &grid, &search).unwrap()).collect();
        let r = hj_residual(&sols[0], &sols[1], &sols[2], &spec).unwrap();
        let max = crate::madelung::nan_max_abs(r.values());
        assert!(max < 1e-8, "{max}");
        assert!(r.values().iter().filter(|v| !v.is_nan()).count() > 50);

        // curved action: residual shrinks as the x0 lattice refines
        let chirped = LinearChirpAction { mass: 1.0, velocity: [0.6, 0.0], chirp: 0.7, center: [0.0; 2] };
        let res = |points: usize| {
            let search = SearchGrid::new_1d(-10.0, 10.0, points).unwrap();
            let sols: Vec<_> =
                [t - d, t, t + d].iter().map(|&s| hopf_lax_solve(&chirped, &spec, s, &grid, &search).unwrap()).collect();
            crate::madelung::nan_max_abs(hj_residual(&sols[0], &sols[1], &sols[2], &spec).unwrap().values())
        };
        assert!(res(41) >= res(81));
    }

    #[test]
    fn flagged_nodes_are_excluded_from_residual() {
        let spec = PotentialSpec::free(1.0).unwrap();
        let s0 = FnAction { value: |p: Point| 5.0 * ((p[0] * p[0] - 4.0).powi(2)), gradient: |_| [0.0; 2] };
        let grid = Grid::new_1d(8.0, 32).unwrap();
        let search = SearchGrid::new_1d(-4.0, 4.0, 161).unwrap();
        let sols: Vec<_> = [0.99, 1.0, 1.01].iter().map(|&s| hopf_lax_solve(&s0, &spec, s, &grid, &search).unwrap()).collect();
        let center = grid.nearest([0.0, 0.0]);
        assert_eq!(sols[1].flags[center], NodeFlag::Multivalued);
        let r = hj_residual(&sols[0], &sols[1], &sols[2], &spec).unwrap();
        assert!(r.values()[center].is_nan());
    }

    #[test]
    fn classical_density_translates_gaussian() {
        let grid = Grid::new_1d(40.0, 200).unwrap();
        let rho0 = RealField::from_fn(grid, FieldUnits::Density, |p| (-p[0] * p[0] / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()).unwrap();
        let spec = PotentialSpec::free(1.0).unwrap();
        let s0 = LinearChirpAction::plane_wave(1.0, [1.5, 0.0]);
        let times = [0.0, 2.0];
        let n = 10_000;
        let e = evolve_classical_density(&rho0, &s0, &spec, &times, n, 11, SamplingMode::Random).unwrap();
        let moved = RealField::from_fn(grid, FieldUnits::Density, |p| {
            (-(p[0] - 3.0).powi(2) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .unwrap();
        // coarse bins: 10 cells each
        let l1 = |a: &RealField, b: &RealField| {
            a.values()
                .chunks(10)
                .zip(b.values().chunks(10))
                .map(|(x, y)| (x.iter().sum::<f64>() - y.iter().sum::<f64>()).abs() * grid.spacing(0))
                .sum::<f64>()
        };
        assert!(l1(&e.densities[1].rho, &moved) < 0.05);
        assert!(l1(&e.densities[0].rho, &rho0) < 0.05);
        assert!((e.densities[1].rho.integral() - 1.0).abs() < 1e-3);
        assert!(matches!(
            evolve_classical_density(&rho0, &s0, &spec, &times, 10, 1, SamplingMode::Random),
            Err(ClassicalError::TooFewParticles { .. })
        ));
    }

    #[test]
    fn determinist_oscillator() {
        let spec = PotentialSpec::harmonic(1.0, 1.3).unwrap();
        let a = 0.8;
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.2).collect();
        let sol = determinist_solution(&spec, [a, 0.0], [0.0, 0.0], &times).unwrap();
        for (k, t) in times.iter().enumerate() {
            assert!((sol.path.positions[0][k][0] - a * (1.3 * t).cos()).abs() < 1e-14);
        }
        assert!(sol.residual_max < 1e-8, "{}", sol.residual_max);
        assert_eq!(sol.g[0], 0.0);

        let rest = determinist_solution(&spec, [0.0; 2], [0.0; 2], &times).unwrap();
        assert!(rest.g.iter().chain(&rest.action_on_path).all(|v| *v == 0.0));
        assert!(matches!(
            determinist_solution(&PotentialSpec::free(1.0).unwrap(), [0.0; 2], [0.0; 2], &times),
            Err(ClassicalError::NotHarmonic(_))
        ));
    }
}
