//! Closed-form coherent state of the isotropic harmonic oscillator in 1D or
//! 2D. Pure formulas, no grids: this is the reference the numerical modules
//! are tested against.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{Grid, GridError, Point, WaveField};
use crate::potentials::{PotentialError, PotentialSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoherentError {
    #[error("coherent state dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("coherent state parameter `{name}` must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentState {
    pub dim: usize,
    pub omega: f64,
    pub mass: f64,
    pub hbar: f64,
    pub x0: Point,
    pub v0: Point,
}

/// The ħ → 0 objects: all mass at `center`, action linear in `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitFields {
    pub time: f64,
    pub center: Point,
    pub velocity: Point,
    pub g: f64,
    pub mass: f64,
}

impl LimitFields {
    pub fn action(&self, x: Point) -> f64 {
        self.mass * dot(self.velocity, x) + self.g
    }

    /// Integral of `f` against the limiting Dirac mass.
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        f(self.center)
    }
}

/// Both sides of `2 V(ξ) = m ξ''·ξ` as literally stated; along an
/// oscillator orbit `m ξ''·ξ = -2 V(ξ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirialCheck {
    pub twice_potential: f64,
    pub mass_acceleration_dot_position: f64,
}

impl VirialCheck {
    pub fn signed_gap(&self) -> f64 {
        self.twice_potential - self.mass_acceleration_dot_position
    }

    pub fn magnitude_gap(&self) -> f64 {
        self.twice_potential.abs() - self.mass_acceleration_dot_position.abs()
    }
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm2(a: Point) -> f64 {
    dot(a, a)
}

impl CoherentState {
    pub fn new(dim: usize, omega: f64, mass: f64, hbar: f64, x0: Point, v0: Point) -> Result<Self, CoherentError> {
        if dim != 1 && dim != 2 {
            return Err(CoherentError::Dimension(dim));
        }
        for (name, value) in [("omega", omega), ("mass", mass), ("hbar", hbar)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(CoherentError::InvalidParameter { name, value });
            }
        }
        let mut x0 = x0;
        let mut v0 = v0;
        if dim == 1 {
            x0[1] = 0.0;
            v0[1] = 0.0;
        }
        Ok(CoherentState { dim, omega, mass, hbar, x0, v0 })
    }

    pub fn with_hbar(&self, hbar: f64) -> Result<Self, CoherentError> {
        Self::new(self.dim, self.omega, self.mass, hbar, self.x0, self.v0)
    }

    pub fn potential(&self) -> Result<PotentialSpec, PotentialError> {
        PotentialSpec::harmonic(self.mass, self.omega)
    }

    /// `σ_ħ = √(ħ / 2mω)`, the standard deviation of the density per axis.
    pub fn sigma(&self) -> f64 {
        (self.hbar / (2.0 * self.mass * self.omega)).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    fn amplitudes(&self) -> (Point, Point) {
        (self.x0, [self.v0[0] / self.omega, self.v0[1] / self.omega])
    }

    /// `ξ(t) = x0 cos ωt + (v0/ω) sin ωt`.
    pub fn center(&self, t: f64) -> Point {
        let (a, b) = self.amplitudes();
        let (s, c) = (self.omega * t).sin_cos();
        [a[0] * c + b[0] * s, a[1] * c + b[1] * s]
    }

    pub fn velocity(&self, t: f64) -> Point {
        let (a, b) = self.amplitudes();
        let (s, c) = (self.omega * t).sin_cos();
        let w = self.omega;
        [w * (b[0] * c - a[0] * s), w * (b[1] * c - a[1] * s)]
    }

    pub fn acceleration(&self, t: f64) -> Point {
        let xi = self.center(t);
        let w2 = self.omega * self.omega;
        [-w2 * xi[0], -w2 * xi[1]]
    }

    pub fn peak_density(&self) -> f64 {
        (2.0 * PI * self.sigma().powi(2)).powf(-(self.dim as f64) / 2.0)
    }

    pub fn density(&self, x: Point, t: f64) -> f64 {
        let xi = self.center(t);
        let r2 = (x[0] - xi[0]).powi(2) + (x[1] - xi[1]).powi(2);
        self.peak_density() * (-r2 / (2.0 * self.sigma().powi(2))).exp()
    }

    /// Closed form of `g(t) = ∫₀ᵗ (-½ m |ξ'|² + ½ m ω² |ξ|²) ds`.
    pub fn g(&self, t: f64) -> f64 {
        let (a, b) = self.amplitudes();
        let w = self.omega;
        let (s2, c2) = (2.0 * w * t).sin_cos();
        0.25 * self.mass * w * ((norm2(a) - norm2(b)) * s2 + 2.0 * dot(a, b) * (1.0 - c2))
    }

    /// `g(t)` by adaptive Simpson quadrature of its integrand.
    pub fn g_quadrature(&self, t: f64, tol: f64) -> f64 {
        let integrand = |s: f64| {
            let xi = self.center(s);
            let v = self.velocity(s);
            0.5 * self.mass * (self.omega * self.omega * norm2(xi) - norm2(v))
        };
        adaptive_simpson(&integrand, 0.0, t, tol)
    }

    /// `S(x,t) = m ξ'(t)·x + g(t) - (dim/2) ħ ω t`.
    pub fn action(&self, x: Point, t: f64) -> f64 {
        self.mass * dot(self.velocity(t), x) + self.g(t) - 0.5 * self.dim as f64 * self.hbar * self.omega * t
    }

    /// `∇S = m ξ'(t)`, independent of `x`.
    pub fn action_gradient(&self, t: f64) -> Point {
        let v = self.velocity(t);
        [self.mass * v[0], self.mass * v[1]]
    }

    /// `Q = (dim/2) ħω - ½ m ω² |x - ξ|²`.
    pub fn quantum_potential(&self, x: Point, t: f64) -> f64 {
        let xi = self.center(t);
        let r2 = (x[0] - xi[0]).powi(2) + (x[1] - xi[1]).powi(2);
        0.5 * self.dim as f64 * self.hbar * self.omega - 0.5 * self.mass * self.omega * self.omega * r2
    }

    /// Bohm velocity with the 2D spin term: `ξ' + ω k × (x - ξ)`.
    pub fn spin_velocity(&self, x: Point, t: f64) -> Point {
        let xi = self.center(t);
        let v = self.velocity(t);
        let w = self.omega;
        [v[0] - w * (x[1] - xi[1]), v[1] + w * (x[0] - xi[0])]
    }

    pub fn wave_function(&self, x: Point, t: f64) -> Complex64 {
        Complex64::from_polar(self.density(x, t).sqrt(), self.action(x, t) / self.hbar)
    }

    /// Samples the exact state on `grid` at time `t` (not renormalized).
    pub fn wave_field(&self, grid: &Grid, t: f64) -> Result<WaveField, CoherentError> {
        if grid.dim() != self.dim {
            return Err(CoherentError::Grid(GridError::Mismatch));
        }
        let values = grid.nodes().map(|p| self.wave_function(p, t)).collect();
        Ok(WaveField::new(*grid, values, self.hbar, self.mass, t)?)
    }

    pub fn limit_fields(&self, t: f64) -> LimitFields {
        LimitFields { time: t, center: self.center(t), velocity: self.velocity(t), g: self.g(t), mass: self.mass }
    }

    pub fn virial_check(&self, t: f64) -> VirialCheck {
        let xi = self.center(t);
        let v = 0.5 * self.mass * self.omega * self.omega * norm2(xi);
        VirialCheck {
            twice_potential: 2.0 * v,
            mass_acceleration_dot_position: self.mass * dot(self.acceleration(t), xi),
        }
    }
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + simpson_recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

pub(crate) fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    simpson_recurse(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> CoherentState {
        CoherentState::new(2, 1.3, 0.7, 0.9, [1.0, -0.4], [0.2, 0.8]).unwrap()
    }

    #[test]
    fn sigma_matches_definition() {
        let cs = state();
        assert!((cs.sigma() - (0.9f64 / (2.0 * 0.7 * 1.3)).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn peak_density_at_center() {
        let cs = state();
        for t in [0.0, 0.4, 2.0] {
            let expected = 1.0 / (2.0 * PI * cs.sigma().powi(2));
            assert!((cs.density(cs.center(t), t) - expected).abs() < 1e-12 * expected);
        }
        assert_eq!(cs.center(0.0), cs.x0);
    }

    #[test]
    fn halving_hbar_doubles_peak() {
        let cs = state();
        let half = cs.with_hbar(cs.hbar / 2.0).unwrap();
        assert!((half.peak_density() / cs.peak_density() - 2.0).abs() < 1e-12);
        assert!((half.sigma().powi(2) / cs.sigma().powi(2) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn action_at_time_zero_is_initial_momentum_phase() {
        let cs = state();
        let x = [0.3, 1.7];
        assert!((cs.action(x, 0.0) - cs.mass * dot(cs.v0, x)).abs() < 1e-15);
    }

    #[test]
    fn rest_state_has_zero_point_phase_only() {
        let cs = CoherentState::new(2, 1.0, 1.0, 0.5, [0.0; 2], [0.0; 2]).unwrap();
        for t in [0.0, 1.0, 3.0] {
            assert!((cs.action([0.4, -0.2], t) + 0.5 * t).abs() < 1e-15);
            assert_eq!(cs.g(t), 0.0);
        }
    }

    #[test]
    fn g_closed_form_matches_quadrature() {
        let cs = state();
        for t in [0.1, 1.0, 2.5, 7.0] {
            assert!((cs.g(t) - cs.g_quadrature(t, 1e-13)).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn action_gradient_over_mass_is_center_velocity() {
        let cs = state();
        let t = 0.8;
        let h = 1e-5;
        let x = [0.2, -1.1];
        let fd = [
            (cs.action([x[0] + h, x[1]], t) - cs.action([x[0] - h, x[1]], t)) / (2.0 * h),
            (cs.action([x[0], x[1] + h], t) - cs.action([x[0], x[1] - h], t)) / (2.0 * h),
        ];
        let v = cs.velocity(t);
        assert!((fd[0] / cs.mass - v[0]).abs() < 1e-8 && (fd[1] / cs.mass - v[1]).abs() < 1e-8);
    }

    #[test]
    fn hbar_gap_to_limit_action_is_zero_point_phase() {
        let cs = state();
        let t = 1.7;
        let lim = cs.limit_fields(t);
        let x = [0.5, 0.5];
        assert!((cs.action(x, t) - lim.action(x) + cs.hbar * cs.omega * t).abs() < 1e-12);
    }

    #[test]
    fn center_solves_hamilton_jacobi_along_path() {
        // ∂S/∂t + |∇S|²/2m + V = Q on the limit action; at x = ξ the classical
        // residual of the ħ-free action vanishes
        let cs = state();
        let h = 1e-5;
        for t in [0.3, 1.1, 2.9] {
            let xi = cs.center(t);
            let lim = |s: f64| cs.limit_fields(s).action(xi);
            let dsdt = (lim(t + h) - lim(t - h)) / (2.0 * h);
            let v = cs.velocity(t);
            let kinetic = 0.5 * cs.mass * norm2(v);
            let pot = 0.5 * cs.mass * cs.omega.powi(2) * norm2(xi);
            assert!((dsdt + kinetic + pot).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn virial_holds_up_to_sign() {
        let cs = state();
        let check = cs.virial_check(0.9);
        assert!(check.magnitude_gap().abs() < 1e-12);
        assert!((check.twice_potential + check.mass_acceleration_dot_position).abs() < 1e-12);
        assert!(check.signed_gap().abs() > 0.1);
    }

    #[test]
    fn one_dimensional_state_ignores_second_axis() {
        let cs = CoherentState::new(1, 1.0, 1.0, 1.0, [1.0, 5.0], [0.0, 3.0]).unwrap();
        assert_eq!(cs.center(1.0)[1], 0.0);
        assert!((cs.quantum_potential(cs.center(1.0), 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CoherentState::new(3, 1.0, 1.0, 1.0, [0.0; 2], [0.0; 2]).is_err());
        assert!(CoherentState::new(2, 0.0, 1.0, 1.0, [0.0; 2], [0.0; 2]).is_err());
        assert!(CoherentState::new(2, 1.0, 1.0, -1.0, [0.0; 2], [0.0; 2]).is_err());
    }
}
