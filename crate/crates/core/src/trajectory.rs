//! Time-stamped particle paths shared by the Bohmian and classical
//! integrators.

use serde::{Deserialize, Serialize};

use crate::grid::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Bohm,
    BohmSpin,
    Classical,
}

/// A set of paths sampled on a common, increasing time base.
///
/// `positions[p][k]` is particle `p` at `times[k]`. A particle absorbed at
/// time index `k` keeps its last position (and zero velocity) from then on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub kind: TrajectoryKind,
    pub dim: usize,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Point>>,
    pub velocities: Vec<Vec<Point>>,
    pub absorbed_at: Vec<Option<usize>>,
}

impl TrajectoryEnsemble {
    pub fn new(kind: TrajectoryKind, dim: usize) -> Self {
        TrajectoryEnsemble {
            kind,
            dim,
            times: Vec::new(),
            positions: Vec::new(),
            velocities: Vec::new(),
            absorbed_at: Vec::new(),
        }
    }

    pub fn particle_count(&self) -> usize {
        self.positions.len()
    }

    pub fn is_absorbed(&self, particle: usize) -> bool {
        self.absorbed_at[particle].is_some()
    }

    pub fn final_positions(&self) -> Vec<Point> {
        self.positions.iter().map(|p| *p.last().expect("empty path")).collect()
    }

    /// Appends one particle's path; it must be sampled on `self.times`.
    pub fn push_path(&mut self, positions: Vec<Point>, velocities: Vec<Point>, absorbed_at: Option<usize>) {
        debug_assert_eq!(positions.len(), self.times.len());
        debug_assert_eq!(velocities.len(), self.times.len());
        self.positions.push(positions);
        self.velocities.push(velocities);
        self.absorbed_at.push(absorbed_at);
    }

    /// Empirical position/velocity dispersion (standard deviation per axis)
    /// over non-absorbed particles at time index `k`.
    pub fn dispersion(&self, k: usize) -> (Point, Point) {
        let alive: Vec<usize> = (0..self.particle_count())
            .filter(|&p| self.absorbed_at[p].is_none_or(|a| a > k))
            .collect();
        let n = alive.len() as f64;
        let mut out = ([0.0; 2], [0.0; 2]);
        if alive.len() < 2 {
            return out;
        }
        for axis in 0..self.dim {
            for (series, slot) in [(&self.positions, &mut out.0), (&self.velocities, &mut out.1)] {
                let mean = alive.iter().map(|&p| series[p][k][axis]).sum::<f64>() / n;
                let var = alive.iter().map(|&p| (series[p][k][axis] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                slot[axis] = var.sqrt();
            }
        }
        out
    }
}

pub(crate) fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Largest distance between two paths over the time indices where both are
/// still live.
pub fn sup_deviation(a: &TrajectoryEnsemble, pa: usize, b: &TrajectoryEnsemble, pb: usize) -> Option<f64> {
    let end_a = a.absorbed_at[pa].unwrap_or(a.times.len());
    let end_b = b.absorbed_at[pb].unwrap_or(b.times.len());
    let end = end_a.min(end_b).min(a.times.len()).min(b.times.len());
    if end == 0 {
        return None;
    }
    Some(
        (0..end)
            .map(|k| distance(a.positions[pa][k], b.positions[pb][k]))
            .fold(0.0, f64::max),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ensemble(paths: &[&[Point]]) -> TrajectoryEnsemble {
        let mut e = TrajectoryEnsemble::new(TrajectoryKind::Classical, 1);
        e.times = (0..paths[0].len()).map(|k| k as f64).collect();
        for p in paths {
            e.push_path(p.to_vec(), vec![[0.0; 2]; p.len()], None);
        }
        e
    }

    #[test]
    fn sup_deviation_takes_the_largest_gap() {
        let a = ensemble(&[&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]]);
        let b = ensemble(&[&[[0.0, 0.0], [1.5, 0.0], [2.1, 0.0]]]);
        assert!((sup_deviation(&a, 0, &b, 0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dispersion_of_two_particles() {
        let e = ensemble(&[&[[1.0, 0.0]], &[[3.0, 0.0]]]);
        let (pos, _) = e.dispersion(0);
        assert!((pos[0] - 2.0f64.sqrt()).abs() < 1e-15);
    }
}
