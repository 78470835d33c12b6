//! Symmetric (Strang) split-step spectral propagation of
//! `iħ ∂ψ/∂t = -(ħ²/2m) Δψ + V ψ` on a periodic grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft;
use crate::grid::{FieldUnits, Grid, GridError, Point, RealField, WaveField};
use crate::potentials::PotentialSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dt = {dt} aliases the kinetic factor: max phase per step {phase:.3} ≥ π (need dt < {limit:.6e})")]
    Aliasing { dt: f64, phase: f64, limit: f64 },
    #[error("invalid propagator configuration: {0}")]
    Config(String),
    #[error("t_final = {t_final} is not a multiple of the output interval {interval}")]
    OutputGrid { t_final: f64, interval: f64 },
    #[error("wave field mass {field} does not match potential mass {potential}")]
    MassMismatch { field: f64, potential: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Largest kinetic phase `dt ħ |k|²_max / 2m` accumulated in one step.
pub fn max_kinetic_phase(grid: &Grid, hbar: f64, mass: f64, dt: f64) -> f64 {
    dt * hbar * grid.max_wavenumber_squared() / (2.0 * mass)
}

/// Time step at which the kinetic phase per step reaches π.
pub fn aliasing_limit(grid: &Grid, hbar: f64, mass: f64) -> f64 {
    PI * 2.0 * mass / (hbar * grid.max_wavenumber_squared())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorConfig {
    pub dt: f64,
    pub steps_per_output: usize,
    /// Multiplicative absorbing mask in `[0, 1]`, applied after every step.
    pub boundary_mask: Option<RealField>,
}

impl PropagatorConfig {
    pub fn new(dt: f64, steps_per_output: usize) -> Result<Self, SolverError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SolverError::Config(format!("dt must be positive, got {dt}")));
        }
        if steps_per_output == 0 {
            return Err(SolverError::Config("steps_per_output must be positive".into()));
        }
        Ok(PropagatorConfig { dt, steps_per_output, boundary_mask: None })
    }

    pub fn with_mask(mut self, mask: RealField) -> Result<Self, SolverError> {
        if let Some(v) = mask.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SolverError::Config(format!("absorbing mask value {v} outside [0, 1]")));
        }
        self.boundary_mask = Some(mask);
        Ok(self)
    }

    pub fn output_interval(&self) -> f64 {
        self.dt * self.steps_per_output as f64
    }

    /// Checks the aliasing precondition against `grid` and `ħ/m`.
    pub fn check(&self, grid: &Grid, hbar: f64, mass: f64) -> Result<(), SolverError> {
        let phase = max_kinetic_phase(grid, hbar, mass, self.dt);
        if phase >= PI {
            return Err(SolverError::Aliasing { dt: self.dt, phase, limit: aliasing_limit(grid, hbar, mass) });
        }
        if let Some(mask) = &self.boundary_mask {
            if mask.grid() != grid {
                return Err(SolverError::Grid(GridError::Mismatch));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observer {
    Norm,
    Energy,
    CenterOfMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub norm: Option<f64>,
    pub energy: Option<f64>,
    pub center_of_mass: Option<Point>,
}

/// Snapshots and per-snapshot observations of one evolution.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub snapshots: Vec<WaveField>,
    pub observations: Vec<Observation>,
    pub absorbed_probability: f64,
}

/// Summary of a streaming run; snapshots went to the caller's sink.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub final_field: WaveField,
    pub observations: Vec<Observation>,
    pub absorbed_probability: f64,
    pub steps: usize,
}

/// Precomputed split-step factors for one grid, potential and `ħ`.
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: Grid,
    hbar: f64,
    mass: f64,
    dt: f64,
    steps_per_output: usize,
    potential: Vec<f64>,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    kinetic_energy: Vec<f64>,
    mask: Option<Vec<f64>>,
}

impl Propagator {
    pub fn new(grid: Grid, potential: &PotentialSpec, hbar: f64, cfg: &PropagatorConfig) -> Result<Self, SolverError> {
        let mass = potential.mass;
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(SolverError::Config(format!("hbar must be positive, got {hbar}")));
        }
        cfg.check(&grid, hbar, mass)?;
        let dt = cfg.dt;
        let v = potential.sample(&grid, 0.0).into_values();
        let half_potential = v.iter().map(|&v| Complex64::from_polar(1.0, -v * dt / (2.0 * hbar))).collect();
        let k2 = grid.wavenumber_squared();
        let kinetic: Vec<Complex64> = k2
            .iter()
            .map(|&k2| Complex64::from_polar(1.0, -hbar * k2 * dt / (2.0 * mass)))
            .collect();
        let kinetic = fft::transposed_table(&grid, &kinetic);
        let kinetic_energy = k2.iter().map(|&k2| hbar * hbar * k2 / (2.0 * mass)).collect();
        Ok(Propagator {
            grid,
            hbar,
            mass,
            dt,
            steps_per_output: cfg.steps_per_output,
            potential: v,
            half_potential,
            kinetic,
            kinetic_energy,
            mask: cfg.boundary_mask.as_ref().map(|m| m.values().to_vec()),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn output_interval(&self) -> f64 {
        self.dt * self.steps_per_output as f64
    }

    fn check_field(&self, psi: &WaveField) -> Result<(), SolverError> {
        if psi.grid() != &self.grid {
            return Err(SolverError::Grid(GridError::Mismatch));
        }
        if (psi.mass() - self.mass).abs() > 1e-12 * self.mass || (psi.hbar() - self.hbar).abs() > 1e-12 * self.hbar {
            return Err(SolverError::MassMismatch { field: psi.mass(), potential: self.mass });
        }
        Ok(())
    }

    /// Advances `psi` by one step in place; returns the probability removed
    /// by the absorbing mask during the step.
    pub fn step_in_place(&self, psi: &mut WaveField) -> f64 {
        let values = psi.values_mut();
        for (v, f) in values.iter_mut().zip(&self.half_potential) {
            *v *= f;
        }
        let mut scratch = Vec::new();
        fft::forward_transposed(&self.grid, values, &mut scratch);
        for (v, f) in values.iter_mut().zip(&self.kinetic) {
            *v *= f;
        }
        fft::inverse_from_transposed(&self.grid, values, &mut scratch);
        for (v, f) in values.iter_mut().zip(&self.half_potential) {
            *v *= f;
        }
        let mut absorbed = 0.0;
        if let Some(mask) = &self.mask {
            for (v, m) in values.iter_mut().zip(mask) {
                let before = v.norm_sqr();
                *v *= *m;
                absorbed += before - v.norm_sqr();
            }
            absorbed *= self.grid.cell_volume();
        }
        let t = psi.time() + self.dt;
        psi.set_time(t);
        absorbed
    }

    /// Returns `psi` advanced by one step.
    pub fn step(&self, psi: &WaveField) -> Result<WaveField, SolverError> {
        self.check_field(psi)?;
        let mut next = psi.clone();
        self.step_in_place(&mut next);
        Ok(next)
    }

    /// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩`.
    pub fn energy(&self, psi: &WaveField) -> f64 {
        let mut spectrum = psi.values().to_vec();
        fft::forward(&self.grid, &mut spectrum);
        let n = self.grid.len() as f64;
        let kinetic: f64 = spectrum.iter().zip(&self.kinetic_energy).map(|(c, e)| e * c.norm_sqr()).sum::<f64>() / n;
        let potential: f64 = psi.values().iter().zip(&self.potential).map(|(c, v)| v * c.norm_sqr()).sum();
        let norm2: f64 = psi.values().iter().map(|c| c.norm_sqr()).sum();
        (kinetic + potential) / norm2
    }

    pub fn observe(&self, psi: &WaveField, observers: &[Observer]) -> Observation {
        let mut obs = Observation { time: psi.time(), ..Default::default() };
        for o in observers {
            match o {
                Observer::Norm => obs.norm = Some(psi.norm()),
                Observer::Energy => obs.energy = Some(self.energy(psi)),
                Observer::CenterOfMass => obs.center_of_mass = Some(psi.center_of_mass()),
            }
        }
        obs
    }

    fn output_count(&self, t_final: f64) -> Result<usize, SolverError> {
        let interval = self.output_interval();
        let count = (t_final / interval).round();
        if !(t_final > 0.0) || count < 1.0 || (count * interval - t_final).abs() > 1e-9 * t_final.max(1.0) {
            return Err(SolverError::OutputGrid { t_final, interval });
        }
        Ok(count as usize)
    }

    /// Evolves `psi0` over `[t0, t0 + t_final]`, handing every snapshot
    /// (including the initial one) to `sink`.
    pub fn run(
        &self,
        psi0: &WaveField,
        t_final: f64,
        observers: &[Observer],
        mut sink: impl FnMut(&WaveField, &Observation),
    ) -> Result<RunSummary, SolverError> {
        self.check_field(psi0)?;
        let outputs = self.output_count(t_final)?;
        let t0 = psi0.time();
        let mut psi = psi0.clone();
        let mut observations = Vec::with_capacity(outputs + 1);
        let mut absorbed = 0.0;
        let first = self.observe(&psi, observers);
        sink(&psi, &first);
        observations.push(first);
        let mut steps = 0usize;
        for _ in 0..outputs {
            for _ in 0..self.steps_per_output {
                absorbed += self.step_in_place(&mut psi);
                steps += 1;
                // avoid accumulating rounding in the clock
                psi.set_time(t0 + steps as f64 * self.dt);
            }
            let obs = self.observe(&psi, observers);
            sink(&psi, &obs);
            observations.push(obs);
        }
        Ok(RunSummary { final_field: psi, observations, absorbed_probability: absorbed, steps })
    }

    /// Evolves and keeps every snapshot in memory.
    pub fn evolve(&self, psi0: &WaveField, t_final: f64, observers: &[Observer]) -> Result<Evolution, SolverError> {
        let mut snapshots = Vec::new();
        let summary = self.run(psi0, t_final, observers, |psi, _| snapshots.push(psi.clone()))?;
        Ok(Evolution { snapshots, observations: summary.observations, absorbed_probability: summary.absorbed_probability })
    }
}

/// One split-step of `psi` under `potential`.
pub fn step(psi: &WaveField, potential: &PotentialSpec, cfg: &PropagatorConfig) -> Result<WaveField, SolverError> {
    Propagator::new(*psi.grid(), potential, psi.hbar(), cfg)?.step(psi)
}

pub fn evolve(
    psi0: &WaveField,
    potential: &PotentialSpec,
    cfg: &PropagatorConfig,
    t_final: f64,
    observers: &[Observer],
) -> Result<Evolution, SolverError> {
    Propagator::new(*psi0.grid(), potential, psi0.hbar(), cfg)?.evolve(psi0, t_final, observers)
}

/// Absorbing layer `mask = 1` in the interior, falling smoothly to
/// `1 - strength` per step at the box edges over `width` (position units).
pub fn edge_absorber(grid: &Grid, width: f64, strength: f64) -> RealField {
    RealField::from_fn(*grid, FieldUnits::Dimensionless, |p| {
        let mut m = 1.0;
        for axis in 0..grid.dim() {
            let half = 0.5 * grid.extent(axis);
            let depth = width - (half - p[axis].abs());
            if depth > 0.0 {
                let s = (depth / width).min(1.0);
                m *= 1.0 - strength * (0.5 * PI * s).sin().powi(2);
            }
        }
        m
    })
    .expect("mask matches grid")
}
