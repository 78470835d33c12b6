//! Potentials `V(x, t)` for the supported scenarios, with closed-form
//! classical actions and trajectories where they exist.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{FieldUnits, Grid, Point, RealField};
use crate::trajectory::{TrajectoryEnsemble, TrajectoryKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("caustic: sin(ωt) vanishes for ω = {omega}, t = {time}")]
    Caustic { omega: f64, time: f64 },
    #[error("{0} potential has no closed-form classical action")]
    Unsupported(&'static str),
    #[error("potential parameter {name} is invalid: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("classical action needs t > 0, got {0}")]
    NonPositiveTime(f64),
    #[error("trajectory time grid must start at 0 and increase strictly")]
    TimeGrid,
    #[error("adaptive integration failed to converge near t = {0}")]
    StepControl(f64),
}

/// Two slits cut into a smooth wall perpendicular to axis 0.
///
/// `V = height · wall(x) · (1 − openings(y))` where `wall` and `openings` are
/// differences of `tanh` ramps of width `edge_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleSlit {
    pub wall_position: f64,
    pub wall_thickness: f64,
    pub slit_separation: f64,
    pub slit_width: f64,
    pub height: f64,
    pub edge_width: f64,
}

impl DoubleSlit {
    /// Transverse centres of the two openings.
    pub fn slit_centers(&self) -> [f64; 2] {
        [-0.5 * self.slit_separation, 0.5 * self.slit_separation]
    }

    /// Whether transverse coordinate `y` lies inside an opening.
    pub fn in_opening(&self, y: f64) -> bool {
        self.slit_centers().iter().any(|c| (y - c).abs() <= 0.5 * self.slit_width)
    }

    // ½[tanh((u-a)/ε) - tanh((u-b)/ε)] and its derivative
    fn window(&self, u: f64, a: f64, b: f64) -> (f64, f64) {
        let e = self.edge_width;
        let (ta, tb) = (((u - a) / e).tanh(), ((u - b) / e).tanh());
        (0.5 * (ta - tb), 0.5 * ((1.0 - ta * ta) - (1.0 - tb * tb)) / e)
    }

    fn wall(&self, x: f64) -> (f64, f64) {
        let half = 0.5 * self.wall_thickness;
        self.window(x, self.wall_position - half, self.wall_position + half)
    }

    fn openings(&self, y: f64) -> (f64, f64) {
        let half = 0.5 * self.slit_width;
        self.slit_centers().iter().fold((0.0, 0.0), |(v, d), c| {
            let (wv, wd) = self.window(y, c - half, c + half);
            (v + wv, d + wd)
        })
    }

    fn value(&self, p: Point) -> f64 {
        self.height * self.wall(p[0]).0 * (1.0 - self.openings(p[1]).0)
    }

    fn gradient(&self, p: Point) -> Point {
        let (w, dw) = self.wall(p[0]);
        let (o, d_o) = self.openings(p[1]);
        [self.height * dw * (1.0 - o), -self.height * w * d_o]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Free,
    /// Uniform force field, `V = -f·x`.
    Linear { force: Point },
    /// Isotropic oscillator, `V = ½ m ω² |x|²`.
    Harmonic { omega: f64 },
    DoubleSlit(DoubleSlit),
}

impl PotentialKind {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialKind::Free => "free",
            PotentialKind::Linear { .. } => "linear",
            PotentialKind::Harmonic { .. } => "harmonic",
            PotentialKind::DoubleSlit(_) => "double_slit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub mass: f64,
}

fn check_positive(name: &'static str, value: f64) -> Result<(), PotentialError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(PotentialError::InvalidParameter { name, value })
    }
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind, mass: f64) -> Result<Self, PotentialError> {
        check_positive("mass", mass)?;
        match &kind {
            PotentialKind::Free => {}
            PotentialKind::Linear { force } => {
                if !force.iter().all(|f| f.is_finite()) {
                    return Err(PotentialError::InvalidParameter { name: "force", value: f64::NAN });
                }
            }
            PotentialKind::Harmonic { omega } => check_positive("omega", *omega)?,
            PotentialKind::DoubleSlit(ds) => {
                check_positive("wall_thickness", ds.wall_thickness)?;
                check_positive("slit_width", ds.slit_width)?;
                check_positive("height", ds.height)?;
                check_positive("edge_width", ds.edge_width)?;
                if !(ds.slit_separation.is_finite() && ds.slit_separation > ds.slit_width) {
                    return Err(PotentialError::InvalidParameter {
                        name: "slit_separation",
                        value: ds.slit_separation,
                    });
                }
                if !ds.wall_position.is_finite() {
                    return Err(PotentialError::InvalidParameter { name: "wall_position", value: ds.wall_position });
                }
            }
        }
        Ok(PotentialSpec { kind, mass })
    }

    pub fn free(mass: f64) -> Result<Self, PotentialError> {
        Self::new(PotentialKind::Free, mass)
    }

    pub fn linear(mass: f64, force: Point) -> Result<Self, PotentialError> {
        Self::new(PotentialKind::Linear { force }, mass)
    }

    pub fn harmonic(mass: f64, omega: f64) -> Result<Self, PotentialError> {
        Self::new(PotentialKind::Harmonic { omega }, mass)
    }

    pub fn double_slit(mass: f64, geometry: DoubleSlit) -> Result<Self, PotentialError> {
        Self::new(PotentialKind::DoubleSlit(geometry), mass)
    }

    pub fn omega(&self) -> Option<f64> {
        match self.kind {
            PotentialKind::Harmonic { omega } => Some(omega),
            _ => None,
        }
    }

    pub fn value(&self, p: Point, _t: f64) -> f64 {
        match &self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::Linear { force } => -dot(*force, p),
            PotentialKind::Harmonic { omega } => 0.5 * self.mass * omega * omega * dot(p, p),
            PotentialKind::DoubleSlit(ds) => ds.value(p),
        }
    }

    pub fn gradient(&self, p: Point, _t: f64) -> Point {
        match &self.kind {
            PotentialKind::Free => [0.0; 2],
            PotentialKind::Linear { force } => [-force[0], -force[1]],
            PotentialKind::Harmonic { omega } => {
                let k = self.mass * omega * omega;
                [k * p[0], k * p[1]]
            }
            PotentialKind::DoubleSlit(ds) => ds.gradient(p),
        }
    }

    /// Samples `V(·, t)` on every node.
    pub fn sample(&self, grid: &Grid, t: f64) -> RealField {
        let values: Vec<f64> = grid.nodes().map(|p| self.value(p, t)).collect();
        RealField::new(*grid, values, FieldUnits::Energy).expect("sampled potential matches grid")
    }

    pub fn has_classical_action(&self) -> bool {
        !matches!(self.kind, PotentialKind::DoubleSlit(_))
    }

    /// Action of the classical path from `x0` (time 0) to `x` (time `t`).
    pub fn classical_action(&self, x: Point, t: f64, x0: Point) -> Result<f64, PotentialError> {
        if !(t > 0.0) {
            return Err(PotentialError::NonPositiveTime(t));
        }
        let m = self.mass;
        let d = [x[0] - x0[0], x[1] - x0[1]];
        match &self.kind {
            PotentialKind::Free => Ok(m * dot(d, d) / (2.0 * t)),
            PotentialKind::Linear { force } => {
                let s = [x[0] + x0[0], x[1] + x0[1]];
                Ok(m * dot(d, d) / (2.0 * t) + 0.5 * dot(*force, s) * t - dot(*force, *force) * t.powi(3) / (24.0 * m))
            }
            PotentialKind::Harmonic { omega } => {
                let (s, c) = self.caustic_safe_sincos(*omega, t)?;
                Ok(m * omega / (2.0 * s) * ((dot(x, x) + dot(x0, x0)) * c - 2.0 * dot(x, x0)))
            }
            PotentialKind::DoubleSlit(_) => Err(PotentialError::Unsupported("double_slit")),
        }
    }

    /// Gradient of [`Self::classical_action`] with respect to the end point
    /// `x`; equals `m` times the arrival velocity.
    pub fn classical_action_gradient(&self, x: Point, t: f64, x0: Point) -> Result<Point, PotentialError> {
        if !(t > 0.0) {
            return Err(PotentialError::NonPositiveTime(t));
        }
        let m = self.mass;
        match &self.kind {
            PotentialKind::Free => Ok([m * (x[0] - x0[0]) / t, m * (x[1] - x0[1]) / t]),
            PotentialKind::Linear { force } => Ok([
                m * (x[0] - x0[0]) / t + 0.5 * force[0] * t,
                m * (x[1] - x0[1]) / t + 0.5 * force[1] * t,
            ]),
            PotentialKind::Harmonic { omega } => {
                let (s, c) = self.caustic_safe_sincos(*omega, t)?;
                let k = m * omega / s;
                Ok([k * (x[0] * c - x0[0]), k * (x[1] * c - x0[1])])
            }
            PotentialKind::DoubleSlit(_) => Err(PotentialError::Unsupported("double_slit")),
        }
    }

    fn caustic_safe_sincos(&self, omega: f64, t: f64) -> Result<(f64, f64), PotentialError> {
        let (s, c) = (omega * t).sin_cos();
        if s.abs() < 1e-12 {
            return Err(PotentialError::Caustic { omega, time: t });
        }
        Ok((s, c))
    }

    /// Solves `m ξ'' = -∇V` from `(x0, v0)` and samples the path at `times`.
    pub fn classical_trajectory(&self, x0: Point, v0: Point, times: &[f64]) -> Result<TrajectoryEnsemble, PotentialError> {
        check_time_grid(times)?;
        let (positions, velocities) = match &self.kind {
            PotentialKind::Free => times.iter().map(|&t| (axpy(x0, t, v0), v0)).unzip(),
            PotentialKind::Linear { force } => {
                let a = [force[0] / self.mass, force[1] / self.mass];
                times
                    .iter()
                    .map(|&t| (axpy(axpy(x0, t, v0), 0.5 * t * t, a), axpy(v0, t, a)))
                    .unzip()
            }
            PotentialKind::Harmonic { omega } => times
                .iter()
                .map(|&t| {
                    let (s, c) = (omega * t).sin_cos();
                    (
                        [x0[0] * c + v0[0] / omega * s, x0[1] * c + v0[1] / omega * s],
                        [-x0[0] * omega * s + v0[0] * c, -x0[1] * omega * s + v0[1] * c],
                    )
                })
                .unzip(),
            PotentialKind::DoubleSlit(_) => integrate_newton(self, x0, v0, times, 1e-10)?,
        };
        let dim = if x0[1] == 0.0 && v0[1] == 0.0 && !matches!(self.kind, PotentialKind::DoubleSlit(_)) { 1 } else { 2 };
        let mut ensemble = TrajectoryEnsemble::new(TrajectoryKind::Classical, dim);
        ensemble.times = times.to_vec();
        ensemble.push_path(positions, velocities, None);
        Ok(ensemble)
    }
}

fn axpy(x: Point, a: f64, y: Point) -> Point {
    [x[0] + a * y[0], x[1] + a * y[1]]
}

fn check_time_grid(times: &[f64]) -> Result<(), PotentialError> {
    if times.first().is_some_and(|&t| t != 0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(PotentialError::TimeGrid);
    }
    Ok(())
}

type State = [f64; 4];

fn rk4(spec: &PotentialSpec, s: State, t: f64, h: f64) -> State {
    let f = |s: State, t: f64| -> State {
        let g = spec.gradient([s[0], s[1]], t);
        [s[2], s[3], -g[0] / spec.mass, -g[1] / spec.mass]
    };
    let add = |a: State, k: State, c: f64| -> State { std::array::from_fn(|i| a[i] + c * k[i]) };
    let k1 = f(s, t);
    let k2 = f(add(s, k1, 0.5 * h), t + 0.5 * h);
    let k3 = f(add(s, k2, 0.5 * h), t + 0.5 * h);
    let k4 = f(add(s, k3, h), t + h);
    std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Fourth-order Runge–Kutta integration of Newton's equation with
/// step-doubling error control, sampled at `times`.
pub fn integrate_newton(
    spec: &PotentialSpec,
    x0: Point,
    v0: Point,
    times: &[f64],
    tolerance: f64,
) -> Result<(Vec<Point>, Vec<Point>), PotentialError> {
    check_time_grid(times)?;
    let mut state: State = [x0[0], x0[1], v0[0], v0[1]];
    let mut t = 0.0;
    let mut h: f64 = 1e-3;
    let mut positions = Vec::with_capacity(times.len());
    let mut velocities = Vec::with_capacity(times.len());
    for &target in times {
        while t < target {
            let step = h.min(target - t);
            let full = rk4(spec, state, t, step);
            let half = rk4(spec, rk4(spec, state, t, 0.5 * step), t + 0.5 * step, 0.5 * step);
            let err = (0..4).map(|i| (full[i] - half[i]).abs()).fold(0.0, f64::max) / 15.0;
            if err <= tolerance || step < 1e-12 {
                if step < 1e-12 && err > tolerance {
                    return Err(PotentialError::StepControl(t));
                }
                // Richardson-extrapolated accept
                state = std::array::from_fn(|i| half[i] + (half[i] - full[i]) / 15.0);
                t += step;
                let grow = if err > 0.0 { 0.9 * (tolerance / err).powf(0.2) } else { 2.0 };
                h = step * grow.clamp(0.2, 2.0);
                if (target - t).abs() < 1e-14 * target.max(1.0) {
                    t = target;
                }
            } else {
                h = step * (0.9 * (tolerance / err).powf(0.2)).clamp(0.1, 0.5);
            }
        }
        positions.push([state[0], state[1]]);
        velocities.push([state[2], state[3]]);
    }
    Ok((positions, velocities))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Discrete least-action oracle: minimizes the trapezoid-discretized
    /// action over piecewise-linear paths with fixed end points by solving
    /// the (linear) stationarity equations of a quadratic Lagrangian.
    fn discrete_least_action(spec: &PotentialSpec, x: f64, t: f64, x0: f64, segments: usize) -> f64 {
        let h = t / segments as f64;
        let m = spec.mass;
        let (k, f) = match spec.kind {
            PotentialKind::Free => (0.0, 0.0),
            PotentialKind::Linear { force } => (0.0, force[0]),
            PotentialKind::Harmonic { omega } => (m * omega * omega, 0.0),
            PotentialKind::DoubleSlit(_) => unreachable!(),
        };
        // A(q) = Σ m (q_{i+1}-q_i)²/(2h) - h Σ' V(q_i), V = ½ k q² - f q,
        // interior stationarity: m(2q_i - q_{i-1} - q_{i+1})/h - h(k q_i - f) = 0
        let n = segments - 1;
        let diag = 2.0 * m / h - h * k;
        let off = -m / h;
        let mut rhs = vec![-h * f; n];
        rhs[0] -= off * x0;
        rhs[n - 1] -= off * x;
        // Thomas algorithm
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = off / diag;
        d[0] = rhs[0] / diag;
        for i in 1..n {
            let denom = diag - off * c[i - 1];
            c[i] = off / denom;
            d[i] = (rhs[i] - off * d[i - 1]) / denom;
        }
        let mut q = vec![0.0; n];
        q[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            q[i] = d[i] - c[i] * q[i + 1];
        }
        let path: Vec<f64> = std::iter::once(x0).chain(q).chain(std::iter::once(x)).collect();
        let v = |q: f64| 0.5 * k * q * q - f * q;
        let kinetic: f64 = path.windows(2).map(|w| m * (w[1] - w[0]).powi(2) / (2.0 * h)).sum();
        let potential: f64 = path.iter().enumerate().map(|(i, &q)| {
            let w = if i == 0 || i == segments { 0.5 } else { 1.0 };
            w * h * v(q)
        }).sum();
        kinetic - potential
    }

    #[test]
    fn free_action_of_stationary_particle_is_zero() {
        let free = PotentialSpec::free(1.0).unwrap();
        for t in [0.1, 1.0, 7.0] {
            assert_eq!(free.classical_action([0.3, -1.0], t, [0.3, -1.0]).unwrap(), 0.0);
        }
    }

    #[test]
    fn free_action_matches_discrete_oracle() {
        let free = PotentialSpec::free(1.0).unwrap();
        let oracle = discrete_least_action(&free, 1.0, 1.0, 0.0, 400);
        assert_abs_diff_eq!(oracle, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(free.classical_action([1.0, 0.0], 1.0, [0.0, 0.0]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn harmonic_action_quarter_period() {
        let ho = PotentialSpec::harmonic(1.0, 1.0).unwrap();
        let s = ho.classical_action([1.0, 0.0], FRAC_PI_2, [0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-15);
        let oracle = discrete_least_action(&ho, 1.0, FRAC_PI_2, 0.0, 2000);
        assert_abs_diff_eq!(oracle, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn closed_forms_agree_with_discrete_least_action() {
        let cases = [
            PotentialSpec::free(1.3).unwrap(),
            PotentialSpec::linear(0.7, [0.9, 0.0]).unwrap(),
            PotentialSpec::harmonic(1.1, 0.8).unwrap(),
        ];
        for spec in &cases {
            for (x, t, x0) in [(1.0, 0.7, -0.4), (-2.0, 1.9, 0.5), (0.3, 0.2, 0.3)] {
                let exact = spec.classical_action([x, 0.0], t, [x0, 0.0]).unwrap();
                // trapezoid discretization error is O(h²); Richardson on two levels
                let a = discrete_least_action(spec, x, t, x0, 800);
                let b = discrete_least_action(spec, x, t, x0, 1600);
                let extrapolated = b + (b - a) / 3.0;
                assert!((extrapolated - exact).abs() < 1e-8, "{:?}: {extrapolated} vs {exact}", spec.kind);
            }
        }
    }

    #[test]
    fn harmonic_caustic_is_an_error() {
        let ho = PotentialSpec::harmonic(1.0, 2.0).unwrap();
        assert!(matches!(
            ho.classical_action([1.0, 0.0], PI / 2.0, [0.0, 0.0]),
            Err(PotentialError::Caustic { .. })
        ));
    }

    #[test]
    fn double_slit_has_no_closed_form() {
        let ds = PotentialSpec::double_slit(1.0, test_slit()).unwrap();
        assert_eq!(
            ds.classical_action([1.0, 0.0], 1.0, [0.0, 0.0]),
            Err(PotentialError::Unsupported("double_slit"))
        );
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(PotentialSpec::harmonic(1.0, 0.0).is_err());
        assert!(PotentialSpec::harmonic(1.0, -1.0).is_err());
        assert!(PotentialSpec::free(0.0).is_err());
    }

    #[test]
    fn action_blows_up_at_short_times_and_is_finite_on_diagonal() {
        for spec in [
            PotentialSpec::free(1.0).unwrap(),
            PotentialSpec::linear(1.0, [0.5, -0.2]).unwrap(),
            PotentialSpec::harmonic(1.0, 1.0).unwrap(),
        ] {
            let far = spec.classical_action([1.0, 0.5], 1e-8, [0.0, 0.0]).unwrap();
            assert!(far > 1e7);
            let diag = spec.classical_action([0.4, 0.2], 0.9, [0.4, 0.2]).unwrap();
            assert!(diag.is_finite());
        }
    }

    fn test_slit() -> DoubleSlit {
        DoubleSlit {
            wall_position: 0.0,
            wall_thickness: 0.5,
            slit_separation: 3.0,
            slit_width: 1.0,
            height: 50.0,
            edge_width: 0.1,
        }
    }

    #[test]
    fn double_slit_profile() {
        let ds = PotentialSpec::double_slit(1.0, test_slit()).unwrap();
        assert!((ds.value([0.0, 0.0], 0.0) - 50.0 * 2.5f64.tanh()).abs() < 1e-6);
        assert!(ds.value([0.0, 1.5], 0.0) < 1e-2);
        assert!(ds.value([5.0, 0.0], 0.0) < 1e-10);
        // analytic gradient against central differences
        for p in [[0.2, 0.9], [-0.26, 1.02], [0.1, -2.0]] {
            let g = ds.gradient(p, 0.0);
            let h = 1e-6;
            let fx = (ds.value([p[0] + h, p[1]], 0.0) - ds.value([p[0] - h, p[1]], 0.0)) / (2.0 * h);
            let fy = (ds.value([p[0], p[1] + h], 0.0) - ds.value([p[0], p[1] - h], 0.0)) / (2.0 * h);
            assert!((g[0] - fx).abs() < 1e-4 * (1.0 + fx.abs()));
            assert!((g[1] - fy).abs() < 1e-4 * (1.0 + fy.abs()));
        }
    }

    #[test]
    fn textbook_trajectories() {
        let ho = PotentialSpec::harmonic(1.0, 1.0).unwrap();
        let times: Vec<f64> = (0..20).map(|k| k as f64 * 0.3).collect();
        let path = ho.classical_trajectory([1.0, 0.0], [0.0, 0.0], &times).unwrap();
        for (k, t) in times.iter().enumerate() {
            assert_abs_diff_eq!(path.positions[0][k][0], t.cos(), epsilon = 1e-15);
            assert_eq!(path.positions[0][k][1], 0.0);
        }
        let free = PotentialSpec::free(1.0).unwrap();
        let path = free.classical_trajectory([0.0, 0.0], [2.0, 0.0], &[0.0, 1.5]).unwrap();
        assert_eq!(path.positions[0][1][0], 3.0);
    }

    #[test]
    fn linear_trajectory_closed_form_matches_integrator() {
        let lin = PotentialSpec::linear(1.0, [0.0, -1.0]).unwrap();
        let times = [0.0, 0.5, 2.0];
        let path = lin.classical_trajectory([0.0, 0.0], [1.0, 0.0], &times).unwrap();
        assert_abs_diff_eq!(path.positions[0][2][0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(path.positions[0][2][1], -2.0, epsilon = 1e-15);
        let (numeric, _) = integrate_newton(&lin, [0.0, 0.0], [1.0, 0.0], &times, 1e-12).unwrap();
        for k in 0..times.len() {
            for axis in 0..2 {
                assert_abs_diff_eq!(numeric[k][axis], path.positions[0][k][axis], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn harmonic_integrator_matches_closed_form() {
        let ho = PotentialSpec::harmonic(1.0, 1.3).unwrap();
        let times: Vec<f64> = (0..10).map(|k| k as f64 * 0.7).collect();
        let exact = ho.classical_trajectory([0.4, -1.0], [0.2, 0.5], &times).unwrap();
        let (numeric, _) = integrate_newton(&ho, [0.4, -1.0], [0.2, 0.5], &times, 1e-12).unwrap();
        for k in 0..times.len() {
            for axis in 0..2 {
                assert_abs_diff_eq!(numeric[k][axis], exact.positions[0][k][axis], epsilon = 1e-9);
            }
        }
    }

    /// Boundary-value shooting: find v0 reaching x at time t with the
    /// numeric integrator, then integrate the Lagrangian along that path.
    fn shooting_action(spec: &PotentialSpec, x: f64, t: f64, x0: f64) -> f64 {
        let n = 4000;
        let times: Vec<f64> = (0..=n).map(|k| t * k as f64 / n as f64).collect();
        let reach = |v: f64| integrate_newton(spec, [x0, 0.0], [v, 0.0], &times, 1e-13).unwrap();
        let end = |v: f64| reach(v).0[n][0] - x;
        let (mut a, mut b) = (-50.0, 50.0);
        let (mut fa, mut fb) = (end(a), end(b));
        for _ in 0..100 {
            let c = b - fb * (b - a) / (fb - fa);
            let fc = end(c);
            a = b;
            fa = fb;
            b = c;
            fb = fc;
            if fb.abs() < 1e-13 {
                break;
            }
        }
        let (pos, vel) = reach(b);
        let lagrangian: Vec<f64> = (0..=n)
            .map(|k| 0.5 * spec.mass * vel[k][0].powi(2) - spec.value(pos[k], times[k]))
            .collect();
        // Simpson
        let h = t / n as f64;
        lagrangian.iter().enumerate().map(|(k, l)| {
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            w * l
        }).sum::<f64>() * h / 3.0
    }

    #[test]
    fn closed_forms_equal_action_along_shot_trajectory() {
        for spec in [
            PotentialSpec::free(1.0).unwrap(),
            PotentialSpec::linear(2.0, [-0.7, 0.0]).unwrap(),
            PotentialSpec::harmonic(1.0, 1.0).unwrap(),
        ] {
            let exact = spec.classical_action([1.3, 0.0], 1.1, [-0.2, 0.0]).unwrap();
            let shot = shooting_action(&spec, 1.3, 1.1, -0.2);
            assert!((exact - shot).abs() < 1e-8, "{:?}: {exact} vs {shot}", spec.kind);
        }
    }

    #[test]
    fn closed_forms_satisfy_hamilton_jacobi() {
        for spec in [
            PotentialSpec::free(1.4).unwrap(),
            PotentialSpec::linear(0.8, [0.3, -0.6]).unwrap(),
            PotentialSpec::harmonic(1.2, 0.9).unwrap(),
        ] {
            let x0 = [0.3, -0.2];
            for (x, t) in [([1.0, 0.5], 0.8), ([-0.7, 1.1], 1.6), ([0.2, 0.1], 0.3)] {
                let h = 1e-4;
                let s = |x: Point, t: f64| spec.classical_action(x, t, x0).unwrap();
                let dt = (s(x, t + h) - s(x, t - h)) / (2.0 * h);
                let gx = (s([x[0] + h, x[1]], t) - s([x[0] - h, x[1]], t)) / (2.0 * h);
                let gy = (s([x[0], x[1] + h], t) - s([x[0], x[1] - h], t)) / (2.0 * h);
                let residual = dt + (gx * gx + gy * gy) / (2.0 * spec.mass) + spec.value(x, t);
                assert!(residual.abs() < 1e-6, "{:?} residual {residual}", spec.kind);
                let g = spec.classical_action_gradient(x, t, x0).unwrap();
                assert!((g[0] - gx).abs() < 1e-6 && (g[1] - gy).abs() < 1e-6);
            }
        }
    }
}
