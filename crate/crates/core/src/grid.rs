//! Uniform periodic grids, field containers and spectral differential
//! operators.
//!
//! Nodes are stored row-major: for a 2D grid the flat index of node `(i, j)`
//! is `i * points(1) + j`, with axis 0 the slow index. Node coordinates are
//! `x_i = -extent/2 + i * spacing`, so the box is centred on the origin.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft;

/// A position in one or two dimensions. One-dimensional grids only use the
/// first component; the second is kept at zero.
pub type Point = [f64; 2];

/// Smallest accepted point count per axis.
pub const MIN_POINTS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("expected {expected} values for a {expected}D grid, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("extent on axis {axis} must be finite and positive, got {value}")]
    Extent { axis: usize, value: f64 },
    #[error("point count on axis {axis} must be even and at least {MIN_POINTS}, got {value}")]
    Points { axis: usize, value: usize },
    #[error("field has {got} values but the grid has {expected} nodes")]
    Length { expected: usize, got: usize },
    #[error("density field has a negative value {value} at node {index}")]
    NegativeDensity { index: usize, value: f64 },
    #[error("fields live on different grids")]
    Mismatch,
    #[error("wave field parameter {name} must be positive and finite, got {value}")]
    Parameter { name: &'static str, value: f64 },
    #[error("wave field norm is not finite or is zero")]
    Norm,
}

/// Uniform, axis-aligned periodic grid in one or two dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extents: [f64; 2],
    points: [usize; 2],
}

impl Grid {
    pub fn new(dim: usize, extents: &[f64], points: &[usize]) -> Result<Self, GridError> {
        if !(1..=2).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        for len in [extents.len(), points.len()] {
            if len != dim {
                return Err(GridError::Arity { expected: dim, got: len });
            }
        }
        let mut grid = Grid { dim, extents: [0.0; 2], points: [1; 2] };
        for axis in 0..dim {
            let (extent, n) = (extents[axis], points[axis]);
            if !(extent.is_finite() && extent > 0.0) {
                return Err(GridError::Extent { axis, value: extent });
            }
            if n < MIN_POINTS || n % 2 != 0 {
                return Err(GridError::Points { axis, value: n });
            }
            grid.extents[axis] = extent;
            grid.points[axis] = n;
        }
        Ok(grid)
    }

    pub fn new_1d(extent: f64, points: usize) -> Result<Self, GridError> {
        Self::new(1, &[extent], &[points])
    }

    pub fn new_2d(extents: [f64; 2], points: [usize; 2]) -> Result<Self, GridError> {
        Self::new(2, &extents, &points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self, axis: usize) -> usize {
        self.points[axis]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extents[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.points[axis] as f64
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.points[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume element used by Riemann sums (`dx` or `dx * dy`).
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        -0.5 * self.extents[axis] + i as f64 * self.spacing(axis)
    }

    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis]).map(|i| self.coordinate(axis, i)).collect()
    }

    /// Per-axis indices of a flat node index.
    pub fn unflatten(&self, index: usize) -> [usize; 2] {
        if self.dim == 1 {
            [index, 0]
        } else {
            [index / self.points[1], index % self.points[1]]
        }
    }

    pub fn flatten(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.points[1] + idx[1]
        }
    }

    pub fn node(&self, index: usize) -> Point {
        let idx = self.unflatten(index);
        let mut p = [0.0; 2];
        for axis in 0..self.dim {
            p[axis] = self.coordinate(axis, idx[axis]);
        }
        p
    }

    pub fn nodes(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    /// Angular wavenumbers of axis `axis` in standard DFT order, scaled by
    /// `2π/extent`. The Nyquist entry is reported as `+N/2`.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.points[axis];
        let scale = TAU / self.extents[axis];
        (0..n)
            .map(|i| {
                let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                m * scale
            })
            .collect()
    }

    /// Wavenumbers used for odd derivatives: the Nyquist mode has no
    /// well-defined sign and is zeroed, which makes the array antisymmetric
    /// and sum to zero.
    pub fn derivative_wavenumbers(&self, axis: usize) -> Vec<f64> {
        let mut k = self.wavenumbers(axis);
        k[self.points[axis] / 2] = 0.0;
        k
    }

    /// Largest `|k|²` representable on the grid.
    pub fn max_wavenumber_squared(&self) -> f64 {
        (0..self.dim).map(|a| (PI / self.spacing(a)).powi(2)).sum()
    }

    /// `|k|²` for every node of the spectral array, row-major.
    pub fn wavenumber_squared(&self) -> Vec<f64> {
        let k0 = self.wavenumbers(0);
        if self.dim == 1 {
            return k0.iter().map(|k| k * k).collect();
        }
        let k1 = self.wavenumbers(1);
        let mut out = Vec::with_capacity(self.len());
        for a in &k0 {
            for b in &k1 {
                out.push(a * a + b * b);
            }
        }
        out
    }

    /// Locates `p` for multilinear interpolation: lower node index and
    /// fractional offset per axis. Returns `None` outside the node span
    /// (the periodic wrap cell is treated as outside).
    pub fn locate(&self, p: Point) -> Option<([usize; 2], [f64; 2])> {
        let mut lower = [0usize; 2];
        let mut frac = [0.0; 2];
        for axis in 0..self.dim {
            let s = (p[axis] + 0.5 * self.extents[axis]) / self.spacing(axis);
            if !s.is_finite() || s < 0.0 {
                return None;
            }
            let n = self.points[axis];
            let mut i = s.floor() as usize;
            let mut f = s - i as f64;
            if i >= n - 1 {
                if i == n - 1 && f == 0.0 {
                    i = n - 2;
                    f = 1.0;
                } else {
                    return None;
                }
            }
            lower[axis] = i;
            frac[axis] = f;
        }
        Some((lower, frac))
    }

    /// Flat index of the node nearest to `p`, clamped to the grid.
    pub fn nearest(&self, p: Point) -> usize {
        let mut idx = [0usize; 2];
        for (axis, slot) in idx.iter_mut().enumerate().take(self.dim) {
            let s = ((p[axis] + 0.5 * self.extents[axis]) / self.spacing(axis)).round();
            *slot = s.clamp(0.0, (self.points[axis] - 1) as f64) as usize;
        }
        self.flatten(idx)
    }

    /// Flat indices of the lattice neighbours of `index` (no periodic wrap).
    pub fn neighbours(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let idx = self.unflatten(index);
        let mut out = [usize::MAX; 4];
        let mut count = 0;
        for axis in 0..self.dim {
            if idx[axis] > 0 {
                let mut m = idx;
                m[axis] -= 1;
                out[count] = self.flatten(m);
                count += 1;
            }
            if idx[axis] + 1 < self.points[axis] {
                let mut p = idx;
                p[axis] += 1;
                out[count] = self.flatten(p);
                count += 1;
            }
        }
        out.into_iter().take(count)
    }
}

/// Physical meaning of a real field's values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldUnits {
    Density,
    Action,
    Energy,
    Velocity,
    Dimensionless,
}

/// Real scalar field sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid,
    values: Vec<f64>,
    units: FieldUnits,
}

impl RealField {
    pub fn new(grid: Grid, values: Vec<f64>, units: FieldUnits) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), got: values.len() });
        }
        if units == FieldUnits::Density {
            if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(GridError::NegativeDensity { index, value });
            }
        }
        Ok(RealField { grid, values, units })
    }

    pub fn from_fn(grid: Grid, units: FieldUnits, f: impl Fn(Point) -> f64) -> Result<Self, GridError> {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values, units)
    }

    pub fn zeros(grid: Grid, units: FieldUnits) -> Self {
        RealField { grid, values: vec![0.0; grid.len()], units }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn units(&self) -> FieldUnits {
        self.units
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Riemann-sum integral over the grid.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Riemann-sum L2 norm.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// Same norm computed from the DFT coefficients.
    pub fn spectral_l2_norm(&self) -> f64 {
        let mut data = self.to_complex();
        fft::forward(&self.grid, &mut data);
        let n = self.grid.len() as f64;
        (data.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.cell_volume() / n).sqrt()
    }

    /// Multilinear interpolation; `None` outside the node span.
    pub fn interpolate(&self, p: Point) -> Option<f64> {
        multilinear(&self.grid, &self.values, p)
    }

    /// Band-limited (trigonometric) interpolation at an arbitrary point.
    /// Exact for fields whose spectrum fits on the grid.
    pub fn interpolate_spectral(&self, p: Point) -> f64 {
        let mut coeffs = self.to_complex();
        fft::forward(&self.grid, &mut coeffs);
        let basis: Vec<Vec<Complex64>> = (0..self.grid.dim())
            .map(|axis| {
                let n = self.grid.points(axis);
                let offset = p[axis] - self.grid.coordinate(axis, 0);
                self.grid
                    .wavenumbers(axis)
                    .iter()
                    .enumerate()
                    .map(|(i, k)| {
                        if i == n / 2 {
                            Complex64::new((k * offset).cos(), 0.0)
                        } else {
                            Complex64::from_polar(1.0, k * offset)
                        }
                    })
                    .collect()
            })
            .collect();
        let sum: Complex64 = if self.grid.dim() == 1 {
            coeffs.iter().zip(&basis[0]).map(|(c, e)| c * e).sum()
        } else {
            let n1 = self.grid.points(1);
            coeffs
                .chunks(n1)
                .zip(&basis[0])
                .map(|(row, ex)| ex * row.iter().zip(&basis[1]).map(|(c, ey)| c * ey).sum::<Complex64>())
                .sum()
        };
        sum.re / self.grid.len() as f64
    }

    fn to_complex(&self) -> Vec<Complex64> {
        self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
    }
}

pub(crate) fn multilinear(grid: &Grid, values: &[f64], p: Point) -> Option<f64> {
    let (lower, frac) = grid.locate(p)?;
    if grid.dim() == 1 {
        let i = lower[0];
        return Some(values[i] * (1.0 - frac[0]) + values[i + 1] * frac[0]);
    }
    let n1 = grid.points(1);
    let (i, j) = (lower[0], lower[1]);
    let (fx, fy) = (frac[0], frac[1]);
    let v00 = values[i * n1 + j];
    let v01 = values[i * n1 + j + 1];
    let v10 = values[(i + 1) * n1 + j];
    let v11 = values[(i + 1) * n1 + j + 1];
    Some((1.0 - fx) * ((1.0 - fy) * v00 + fy * v01) + fx * ((1.0 - fy) * v10 + fy * v11))
}

/// Spectral derivative of a real field along every axis.
///
/// Exact for band-limited periodic inputs. A non-periodic field such as a
/// linear ramp produces Gibbs oscillations; unwrapped actions must go through
/// [`crate::madelung`] instead.
pub fn gradient(field: &RealField) -> Vec<RealField> {
    let grid = *field.grid();
    let mut spectrum = field.to_complex();
    fft::forward(&grid, &mut spectrum);
    spectral_gradient(&grid, &spectrum)
        .into_iter()
        .map(|d| RealField { grid, values: d.iter().map(|c| c.re).collect(), units: field.units })
        .collect()
}

/// Spectral Laplacian (`-|k|²` multiplier).
pub fn laplacian(field: &RealField) -> RealField {
    let grid = *field.grid();
    let mut data = field.to_complex();
    fft::forward(&grid, &mut data);
    for (c, k2) in data.iter_mut().zip(grid.wavenumber_squared()) {
        *c *= -k2;
    }
    fft::inverse(&grid, &mut data);
    RealField { grid, values: data.iter().map(|c| c.re).collect(), units: field.units }
}

/// Derivatives along every axis from a precomputed spectrum (returned in
/// position space).
pub(crate) fn spectral_gradient(grid: &Grid, spectrum: &[Complex64]) -> Vec<Vec<Complex64>> {
    (0..grid.dim())
        .map(|axis| {
            let k = grid.derivative_wavenumbers(axis);
            let mut d: Vec<Complex64> = spectrum
                .iter()
                .enumerate()
                .map(|(idx, c)| c * Complex64::new(0.0, k[grid.unflatten(idx)[axis]]))
                .collect();
            fft::inverse(grid, &mut d);
            d
        })
        .collect()
}

/// Gradient of a complex field along every axis.
pub fn gradient_complex(grid: &Grid, values: &[Complex64]) -> Vec<Vec<Complex64>> {
    let mut spectrum = values.to_vec();
    fft::forward(grid, &mut spectrum);
    spectral_gradient(grid, &spectrum)
}

/// Complex wave function on a grid with the physical constants it evolves
/// under.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: Grid,
    values: Vec<Complex64>,
    hbar: f64,
    mass: f64,
    time: f64,
}

impl WaveField {
    pub fn new(grid: Grid, values: Vec<Complex64>, hbar: f64, mass: f64, time: f64) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), got: values.len() });
        }
        for (name, value) in [("hbar", hbar), ("mass", mass)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(GridError::Parameter { name, value });
            }
        }
        if !(time.is_finite() && time >= 0.0) {
            return Err(GridError::Parameter { name: "time", value: time });
        }
        let field = WaveField { grid, values, hbar, mass, time };
        let norm = field.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(GridError::Norm);
        }
        Ok(field)
    }

    pub fn from_fn(
        grid: Grid,
        hbar: f64,
        mass: f64,
        f: impl Fn(Point) -> Complex64,
    ) -> Result<Self, GridError> {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values, hbar, mass, 0.0)
    }

    /// `√ρ · exp(i S / ħ)`, normalized on the grid.
    pub fn from_density_action(
        grid: Grid,
        hbar: f64,
        mass: f64,
        density: impl Fn(Point) -> f64,
        action: impl Fn(Point) -> f64,
    ) -> Result<Self, GridError> {
        let mut field = Self::from_fn(grid, hbar, mass, |p| Complex64::from_polar(density(p).max(0.0).sqrt(), action(p) / hbar))?;
        field.normalize();
        Ok(field)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    /// Riemann-sum L2 norm.
    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn normalize(&mut self) {
        let norm = self.norm();
        self.values.iter_mut().for_each(|c| *c /= norm);
    }

    pub fn density(&self) -> RealField {
        RealField {
            grid: self.grid,
            values: self.values.iter().map(|c| c.norm_sqr()).collect(),
            units: FieldUnits::Density,
        }
    }

    /// Position expectation value.
    pub fn center_of_mass(&self) -> Point {
        let mut c = [0.0; 2];
        let mut total = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let w = v.norm_sqr();
            let p = self.grid.node(i);
            total += w;
            c[0] += w * p[0];
            c[1] += w * p[1];
        }
        [c[0] / total, c[1] / total]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn uniform_grid_definition() {
        let g = Grid::new(1, &[10.0], &[16]).unwrap();
        assert_eq!(g.spacing(0), 0.625);
        assert_eq!(g.coordinate(0, 0), -5.0);
    }

    #[test]
    fn wavenumbers_on_two_pi_box() {
        let g = Grid::new(1, &[TAU], &[8]).unwrap();
        let k = g.wavenumbers(0);
        let expected = [0.0, 1.0, 2.0, 3.0, 4.0, -3.0, -2.0, -1.0];
        for (a, b) in k.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        let kd = g.derivative_wavenumbers(0);
        assert_abs_diff_eq!(kd.iter().sum::<f64>(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn two_dimensional_grid_size() {
        let g = Grid::new(2, &[20.0, 20.0], &[256, 256]).unwrap();
        assert_eq!(g.len(), 65536);
        assert_eq!(g.spacing(0), 0.078125);
        assert_eq!(g.spacing(1), 0.078125);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(Grid::new(1, &[1.0], &[9]), Err(GridError::Points { .. })));
        assert!(matches!(Grid::new(1, &[1.0], &[6]), Err(GridError::Points { .. })));
        assert!(matches!(Grid::new(1, &[0.0], &[8]), Err(GridError::Extent { .. })));
        assert!(matches!(Grid::new(1, &[-2.0], &[8]), Err(GridError::Extent { .. })));
        assert!(matches!(Grid::new(3, &[1.0; 3], &[8; 3]), Err(GridError::Dimension(3))));
        assert!(matches!(Grid::new(2, &[1.0], &[8]), Err(GridError::Arity { .. })));
    }

    fn periodic_grid(n: usize) -> Grid {
        Grid::new_1d(TAU, n).unwrap()
    }

    // shifts the box so nodes run over [0, 2π)
    fn shifted(p: Point) -> f64 {
        p[0] + PI
    }

    #[test]
    fn gradient_of_sine_is_cosine() {
        let g = periodic_grid(32);
        let f = RealField::from_fn(g, FieldUnits::Action, |p| shifted(p).sin()).unwrap();
        let d = &gradient(&f)[0];
        for (i, v) in d.values().iter().enumerate() {
            assert_abs_diff_eq!(*v, shifted(g.node(i)).cos(), epsilon = 1e-13);
        }
    }

    #[test]
    fn derivatives_of_constant_vanish() {
        let g = Grid::new_2d([3.0, 4.0], [16, 8]).unwrap();
        let f = RealField::from_fn(g, FieldUnits::Action, |_| 2.5).unwrap();
        for d in gradient(&f) {
            assert!(d.values().iter().all(|v| v.abs() < 1e-13));
        }
        assert!(laplacian(&f).values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn laplacian_of_sine() {
        let g = periodic_grid(32);
        let f = RealField::from_fn(g, FieldUnits::Action, |p| shifted(p).sin()).unwrap();
        let lap = laplacian(&f);
        for (i, v) in lap.values().iter().enumerate() {
            assert_abs_diff_eq!(*v, -shifted(g.node(i)).sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn laplacian_of_gaussian_matches_analytic() {
        let g = Grid::new_1d(40.0, 512).unwrap();
        let f = RealField::from_fn(g, FieldUnits::Density, |p| (-0.5 * p[0] * p[0]).exp()).unwrap();
        let lap = laplacian(&f);
        for (i, v) in lap.values().iter().enumerate() {
            let x = g.node(i)[0];
            assert_abs_diff_eq!(*v, (x * x - 1.0) * (-0.5 * x * x).exp(), epsilon = 1e-8);
        }
    }

    #[test]
    fn sawtooth_gradient_has_gibbs_artifacts_at_the_seam() {
        // S(x) = x is discontinuous across the periodic seam. Compared with
        // centred finite differences (which see the true slope 1 away from the
        // seam) the spectral derivative is visibly wrong near the seam and
        // only approximately right in the middle of the box.
        let g = Grid::new_1d(TAU, 64).unwrap();
        let f = RealField::from_fn(g, FieldUnits::Action, |p| p[0]).unwrap();
        let spectral = &gradient(&f)[0];
        let dx = g.spacing(0);
        let fd: Vec<f64> = (1..63).map(|i| (f.values()[i + 1] - f.values()[i - 1]) / (2.0 * dx)).collect();
        assert!(fd.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let seam_error = (spectral.values()[0] - 1.0).abs();
        let middle_error = (spectral.values()[32] - 1.0).abs();
        assert!(seam_error > 10.0, "seam error {seam_error}");
        assert!(middle_error < seam_error / 10.0);
    }

    #[test]
    fn spectral_interpolation_is_exact_for_band_limited_fields() {
        let g = Grid::new_2d([TAU, TAU], [16, 16]).unwrap();
        let f = RealField::from_fn(g, FieldUnits::Energy, |p| (p[0] + 0.3).sin() * (2.0 * p[1]).cos() + 0.5).unwrap();
        let p: Point = [0.123, -1.7];
        let expected = (p[0] + 0.3).sin() * (2.0 * p[1]).cos() + 0.5;
        assert_abs_diff_eq!(f.interpolate_spectral(p), expected, epsilon = 1e-12);
    }

    #[test]
    fn locate_handles_last_node_and_rejects_wrap_cell() {
        let g = Grid::new_1d(8.0, 8).unwrap();
        assert_eq!(g.locate([3.0, 0.0]), Some(([6, 0], [1.0, 0.0])));
        assert!(g.locate([3.5, 0.0]).is_none());
        assert!(g.locate([-4.1, 0.0]).is_none());
    }

    #[test]
    fn wave_field_rejects_zero_norm() {
        let g = Grid::new_1d(1.0, 8).unwrap();
        assert_eq!(
            WaveField::new(g, vec![Complex64::default(); 8], 1.0, 1.0, 0.0),
            Err(GridError::Norm)
        );
    }

    fn band_limited(coeffs: &[(f64, f64)], g: Grid) -> RealField {
        RealField::from_fn(g, FieldUnits::Action, |p| {
            coeffs
                .iter()
                .enumerate()
                .map(|(m, (a, b))| {
                    let k = (m + 1) as f64 * TAU / g.extent(0);
                    a * (k * p[0]).cos() + b * (k * p[0]).sin()
                })
                .sum()
        })
        .unwrap()
    }

    proptest! {
        #[test]
        fn spectral_operators_are_linear(
            a in -3.0..3.0f64,
            b in -3.0..3.0f64,
            cf in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 5),
            cg in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 5),
        ) {
            let g = Grid::new_1d(5.0, 32).unwrap();
            let f = band_limited(&cf, g);
            let h = band_limited(&cg, g);
            let combo = RealField::new(
                g,
                f.values().iter().zip(h.values()).map(|(x, y)| a * x + b * y).collect(),
                FieldUnits::Action,
            ).unwrap();
            let lhs = laplacian(&combo);
            let (lf, lh) = (laplacian(&f), laplacian(&h));
            let dl = &gradient(&combo)[0];
            let (df, dh) = (&gradient(&f)[0], &gradient(&h)[0]);
            for i in 0..g.len() {
                let scale = 1.0 + lhs.values()[i].abs();
                prop_assert!((lhs.values()[i] - (a * lf.values()[i] + b * lh.values()[i])).abs() < 1e-12 * scale);
                prop_assert!((dl.values()[i] - (a * df.values()[i] + b * dh.values()[i])).abs() < 1e-12 * (1.0 + dl.values()[i].abs()));
            }
        }

        #[test]
        fn parseval_holds(values in proptest::collection::vec(-10.0..10.0f64, 64)) {
            let g = Grid::new_2d([2.0, 3.0], [8, 8]).unwrap();
            let f = RealField::new(g, values, FieldUnits::Energy).unwrap();
            let (a, b) = (f.l2_norm(), f.spectral_l2_norm());
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
