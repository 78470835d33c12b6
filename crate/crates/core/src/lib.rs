//! Numerical laboratory for the semi-classical limit of the Schrödinger
//! equation.
//!
//! The crate propagates wave functions with a split-step spectral scheme,
//! extracts the Madelung density/action/quantum-potential fields, integrates
//! de Broglie–Bohm trajectory ensembles, and solves the limiting classical
//! Hamilton–Jacobi problems with the min-plus (Hopf–Lax) formula so that the
//! quantum objects can be compared with their classical limits as ħ → 0.

// `!(x > 0.0)` rejects NaN as well; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bohm;
pub mod classical;
pub mod cli;
pub mod coherent;
pub mod experiments;
pub mod fft;
pub mod grid;
pub mod madelung;
pub mod potentials;
pub mod solver;
pub mod trajectory;

pub use grid::{FieldUnits, Grid, Point, RealField, WaveField};
pub use potentials::{DoubleSlit, PotentialKind, PotentialSpec};
pub use trajectory::{TrajectoryEnsemble, TrajectoryKind};
