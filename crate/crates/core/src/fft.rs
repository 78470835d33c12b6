//! Thin FFT layer over `rustfft` for row-major 1D/2D arrays.
//!
//! Forward transforms are unnormalized; inverse transforms divide by the
//! total point count so that `inverse(forward(f)) == f`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

type Plan = Arc<dyn Fft<f64>>;

fn plan(len: usize, inverse: bool) -> Plan {
    static PLANS: OnceLock<Mutex<HashMap<(usize, bool), Plan>>> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut cache = cache.lock().expect("fft plan cache poisoned");
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

// rows per parallel work item
const ROW_BLOCK: usize = 32;

fn transform_rows(data: &mut [Complex64], row_len: usize, inverse: bool) {
    let fft = plan(row_len, inverse);
    // rows are independent, so the result does not depend on scheduling
    data.par_chunks_mut(row_len * ROW_BLOCK).for_each(|block| {
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(block, &mut scratch);
    });
}

fn transpose(src: &[Complex64], rows: usize, cols: usize, dst: &mut [Complex64]) {
    const TILE: usize = 32;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

fn transform(grid: &Grid, data: &mut [Complex64], inverse: bool) {
    assert_eq!(data.len(), grid.len(), "array length does not match grid");
    match grid.dim() {
        1 => transform_rows(data, grid.points(0), inverse),
        _ => {
            let (n0, n1) = (grid.points(0), grid.points(1));
            transform_rows(data, n1, inverse);
            let mut scratch = vec![Complex64::default(); data.len()];
            transpose(data, n0, n1, &mut scratch);
            transform_rows(&mut scratch, n0, inverse);
            transpose(&scratch, n1, n0, data);
        }
    }
    if inverse {
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Forward transform leaving a 2D spectrum in transposed (axis-1-major)
/// order; saves one transpose when the caller only applies a diagonal
/// multiplier before [`inverse_from_transposed`]. Identical to [`forward`]
/// in 1D.
pub fn forward_transposed(grid: &Grid, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
    assert_eq!(data.len(), grid.len(), "array length does not match grid");
    if grid.dim() == 1 {
        return transform_rows(data, grid.points(0), false);
    }
    let (n0, n1) = (grid.points(0), grid.points(1));
    scratch.resize(data.len(), Complex64::default());
    transform_rows(data, n1, false);
    transpose(data, n0, n1, scratch);
    transform_rows(scratch, n0, false);
    data.copy_from_slice(scratch);
}

/// Inverse of [`forward_transposed`].
pub fn inverse_from_transposed(grid: &Grid, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
    assert_eq!(data.len(), grid.len(), "array length does not match grid");
    if grid.dim() == 2 {
        let (n0, n1) = (grid.points(0), grid.points(1));
        scratch.resize(data.len(), Complex64::default());
        transform_rows(data, n0, true);
        transpose(data, n1, n0, scratch);
        transform_rows(scratch, n1, true);
        data.copy_from_slice(scratch);
    } else {
        transform_rows(data, grid.points(0), true);
    }
    let scale = 1.0 / data.len() as f64;
    data.iter_mut().for_each(|v| *v *= scale);
}

/// Reorders a row-major per-node table into the layout produced by
/// [`forward_transposed`].
pub fn transposed_table<T: Copy + Default>(grid: &Grid, table: &[T]) -> Vec<T> {
    if grid.dim() == 1 {
        return table.to_vec();
    }
    let (n0, n1) = (grid.points(0), grid.points(1));
    let mut out = vec![T::default(); table.len()];
    for r in 0..n0 {
        for c in 0..n1 {
            out[c * n0 + r] = table[r * n1 + c];
        }
    }
    out
}

/// In-place forward transform over every axis of `grid`.
pub fn forward(grid: &Grid, data: &mut [Complex64]) {
    transform(grid, data, false);
}

/// In-place normalized inverse transform over every axis of `grid`.
pub fn inverse(grid: &Grid, data: &mut [Complex64]) {
    transform(grid, data, true);
}
