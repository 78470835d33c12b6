//! Density / action / quantum-potential decomposition of a wave field and
//! the pointwise residuals of the two Madelung equations.

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::fft;
use crate::grid::{self, FieldUnits, Grid, GridError, RealField, WaveField};
use crate::potentials::PotentialSpec;

/// Default floor relative to the density maximum.
pub const DEFAULT_RELATIVE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MadelungError {
    #[error("density floor must be positive and finite, got {0}")]
    Floor(f64),
    #[error("above-floor support splits into {components} components; phases between them are not comparable")]
    DisconnectedSupport { components: usize },
    #[error("snapshots must have increasing times, got {before} then {after}")]
    TimeOrder { before: f64, after: f64 },
    #[error("snapshots disagree on hbar or mass")]
    Constants,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Connected,
    Disconnected { components: usize },
}

/// Madelung variables of one snapshot. Nodes below the density floor carry
/// `NaN` in `action`, `qpotential` and `action_gradient`.
#[derive(Debug, Clone)]
pub struct MadelungFields {
    pub rho: RealField,
    pub action: RealField,
    pub qpotential: RealField,
    /// `ħ Im(ψ* ∇ψ) / |ψ|²`, taken from ψ directly so no unwrapping seam
    /// enters the derivative.
    pub action_gradient: Vec<RealField>,
    /// Raw `arg ψ` in `(-π, π]`, defined everywhere.
    pub phase: Vec<f64>,
    /// Probability current `ħ Im(ψ* ∇ψ) / m`, defined everywhere.
    pub current: Vec<Vec<f64>>,
    /// `∇ ln ρ = 2 Re(ψ* ∇ψ) / |ψ|²`, `NaN` below the floor.
    pub log_density_gradient: Vec<RealField>,
    /// Component label per node, `0` below the floor.
    pub component: Vec<u32>,
    pub support: Support,
    /// Lower-left node of every plaquette with nonzero phase winding.
    pub vortices: Vec<usize>,
    pub rho_floor: f64,
    pub hbar: f64,
    pub mass: f64,
    pub time: f64,
}

impl MadelungFields {
    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    pub fn is_defined(&self, index: usize) -> bool {
        self.component[index] != 0
    }

    /// Fraction of nodes above the floor.
    pub fn coverage(&self) -> f64 {
        self.component.iter().filter(|&&c| c != 0).count() as f64 / self.component.len() as f64
    }

    /// `√ρ exp(iS/ħ)` on defined nodes, zero elsewhere.
    pub fn reconstruct(&self) -> Vec<Complex64> {
        self.rho
            .values()
            .iter()
            .zip(self.action.values())
            .map(|(&r, &s)| if s.is_nan() { Complex64::new(0.0, 0.0) } else { Complex64::from_polar(r.sqrt(), s / self.hbar) })
            .collect()
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(a: f64) -> f64 {
    let w = a - 2.0 * PI * (a / (2.0 * PI)).round();
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

fn nan_field(grid: Grid, values: Vec<f64>, units: FieldUnits) -> RealField {
    RealField::new(grid, values, units).expect("length matches grid")
}

/// Decomposes `psi`; a split support is reported in `support`, not as an
/// error. `rho_floor = None` selects `1e-12 · max ρ`.
pub fn decompose(psi: &WaveField, rho_floor: Option<f64>) -> Result<MadelungFields, MadelungError> {
    let grid = *psi.grid();
    let hbar = psi.hbar();
    let mass = psi.mass();
    let rho = psi.density();
    let floor = rho_floor.unwrap_or(DEFAULT_RELATIVE_FLOOR * rho.max());
    if !(floor.is_finite() && floor > 0.0) {
        return Err(MadelungError::Floor(floor));
    }
    let values = psi.values();
    let phase: Vec<f64> = values.iter().map(|c| c.arg()).collect();
    let above: Vec<bool> = rho.values().iter().map(|&r| r >= floor).collect();

    // flood fill per component, strongest component first
    let mut order: Vec<usize> = (0..grid.len()).filter(|&i| above[i]).collect();
    order.sort_by(|&a, &b| rho.values()[b].total_cmp(&rho.values()[a]).then(a.cmp(&b)));
    let mut component = vec![0u32; grid.len()];
    let mut unwrapped = vec![f64::NAN; grid.len()];
    let mut label = 0u32;
    let mut queue = VecDeque::new();
    for &seed in &order {
        if component[seed] != 0 {
            continue;
        }
        label += 1;
        component[seed] = label;
        unwrapped[seed] = phase[seed];
        queue.push_back(seed);
        while let Some(cur) = queue.pop_front() {
            for nb in grid.neighbours(cur) {
                if above[nb] && component[nb] == 0 {
                    component[nb] = label;
                    unwrapped[nb] = unwrapped[cur] + wrap_phase(phase[nb] - phase[cur]);
                    queue.push_back(nb);
                }
            }
        }
    }
    let support = if label <= 1 { Support::Connected } else { Support::Disconnected { components: label as usize } };

    let action: Vec<f64> = unwrapped.iter().map(|p| hbar * p).collect();

    let amplitude: Vec<f64> = values.iter().map(|c| c.norm()).collect();
    let lap = grid::laplacian(&RealField::new(grid, amplitude.clone(), FieldUnits::Dimensionless)?);
    let qpotential: Vec<f64> = (0..grid.len())
        .map(|i| if above[i] { -hbar * hbar / (2.0 * mass) * lap.values()[i] / amplitude[i] } else { f64::NAN })
        .collect();

    let dpsi = grid::gradient_complex(&grid, values);
    let mut action_gradient = Vec::with_capacity(grid.dim());
    let mut current = Vec::with_capacity(grid.dim());
    let mut log_density_gradient = Vec::with_capacity(grid.dim());
    for d in &dpsi {
        let lg: Vec<f64> = (0..grid.len())
            .map(|i| if above[i] { 2.0 * (values[i].conj() * d[i]).re / rho.values()[i] } else { f64::NAN })
            .collect();
        log_density_gradient.push(nan_field(grid, lg, FieldUnits::Dimensionless));
        let flux: Vec<f64> = values.iter().zip(d).map(|(p, dp)| hbar * (p.conj() * dp).im).collect();
        let grad: Vec<f64> = (0..grid.len())
            .map(|i| if above[i] { flux[i] / rho.values()[i] } else { f64::NAN })
            .collect();
        current.push(flux.iter().map(|f| f / mass).collect());
        action_gradient.push(nan_field(grid, grad, FieldUnits::Action));
    }

    let vortices = if grid.dim() == 2 { find_vortices(&grid, &phase, &above) } else { Vec::new() };

    Ok(MadelungFields {
        rho,
        action: nan_field(grid, action, FieldUnits::Action),
        qpotential: nan_field(grid, qpotential, FieldUnits::Energy),
        action_gradient,
        phase,
        current,
        log_density_gradient,
        component,
        support,
        vortices,
        rho_floor: floor,
        hbar,
        mass,
        time: psi.time(),
    })
}

/// As [`decompose`], but a split support is an error.
pub fn decompose_connected(psi: &WaveField, rho_floor: Option<f64>) -> Result<MadelungFields, MadelungError> {
    let fields = decompose(psi, rho_floor)?;
    match fields.support {
        Support::Connected => Ok(fields),
        Support::Disconnected { components } => Err(MadelungError::DisconnectedSupport { components }),
    }
}

fn find_vortices(grid: &Grid, phase: &[f64], above: &[bool]) -> Vec<usize> {
    let (n0, n1) = (grid.points(0), grid.points(1));
    let mut out = Vec::new();
    for i in 0..n0 - 1 {
        for j in 0..n1 - 1 {
            let loop_ = [grid.flatten([i, j]), grid.flatten([i + 1, j]), grid.flatten([i + 1, j + 1]), grid.flatten([i, j + 1])];
            if loop_.iter().any(|&k| !above[k]) {
                continue;
            }
            let winding: f64 = (0..4).map(|e| wrap_phase(phase[loop_[(e + 1) % 4]] - phase[loop_[e]])).sum();
            if winding.abs() > PI {
                out.push(loop_[0]);
            }
        }
    }
    out
}

/// Pointwise residuals of the Madelung equations at the midpoint of two
/// snapshots. `NaN` marks nodes outside the common above-floor region.
#[derive(Debug, Clone)]
pub struct MadelungResiduals {
    pub time: f64,
    pub hamilton_jacobi: RealField,
    pub continuity: RealField,
    pub coverage: f64,
}

impl MadelungResiduals {
    pub fn hj_max(&self) -> f64 {
        nan_max_abs(self.hamilton_jacobi.values())
    }

    pub fn continuity_max(&self) -> f64 {
        nan_max_abs(self.continuity.values())
    }
}

pub(crate) fn nan_max_abs(values: &[f64]) -> f64 {
    values.iter().filter(|v| !v.is_nan()).fold(0.0, |m, v| m.max(v.abs()))
}

fn divergence(grid: &Grid, components: &[Vec<f64>]) -> Vec<f64> {
    let mut total = vec![0.0; grid.len()];
    for (axis, comp) in components.iter().enumerate() {
        let mut spectrum: Vec<Complex64> = comp.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft::forward(grid, &mut spectrum);
        let k = grid.derivative_wavenumbers(axis);
        for (idx, c) in spectrum.iter_mut().enumerate() {
            *c *= Complex64::new(0.0, k[grid.unflatten(idx)[axis]]);
        }
        fft::inverse(grid, &mut spectrum);
        for (t, c) in total.iter_mut().zip(&spectrum) {
            *t += c.re;
        }
    }
    total
}

/// Residuals of `∂S/∂t + |∇S|²/2m + V + Q = 0` and `∂ρ/∂t + ∇·(ρ∇S/m) = 0`
/// using the centred difference between `before` and `after` and the
/// average of their spatial terms.
pub fn madelung_residuals(
    before: &MadelungFields,
    after: &MadelungFields,
    potential: &PotentialSpec,
) -> Result<MadelungResiduals, MadelungError> {
    if before.grid() != after.grid() {
        return Err(MadelungError::Grid(GridError::Mismatch));
    }
    if !(after.time > before.time) {
        return Err(MadelungError::TimeOrder { before: before.time, after: after.time });
    }
    if before.hbar != after.hbar || before.mass != after.mass {
        return Err(MadelungError::Constants);
    }
    let grid = *before.grid();
    let dt = after.time - before.time;
    let mid = 0.5 * (before.time + after.time);
    let hbar = before.hbar;
    let mass = before.mass;
    let v = potential.sample(&grid, mid);
    let div_b = divergence(&grid, &before.current);
    let div_a = divergence(&grid, &after.current);

    let mut hj = vec![f64::NAN; grid.len()];
    let mut cont = vec![f64::NAN; grid.len()];
    let mut covered = 0usize;
    for i in 0..grid.len() {
        if !(before.is_defined(i) && after.is_defined(i)) {
            continue;
        }
        covered += 1;
        let dsdt = hbar * wrap_phase(after.phase[i] - before.phase[i]) / dt;
        let kinetic = |f: &MadelungFields| {
            f.action_gradient.iter().map(|g| g.values()[i].powi(2)).sum::<f64>() / (2.0 * mass)
        };
        let spatial = 0.5 * (kinetic(before) + before.qpotential.values()[i] + kinetic(after) + after.qpotential.values()[i]);
        hj[i] = dsdt + spatial + v.values()[i];
        let drho = (after.rho.values()[i] - before.rho.values()[i]) / dt;
        cont[i] = drho + 0.5 * (div_b[i] + div_a[i]);
    }
    Ok(MadelungResiduals {
        time: mid,
        hamilton_jacobi: nan_field(grid, hj, FieldUnits::Energy),
        continuity: nan_field(grid, cont, FieldUnits::Dimensionless),
        coverage: covered as f64 / grid.len() as f64,
    })
}
