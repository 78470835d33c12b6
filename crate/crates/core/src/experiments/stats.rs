//! Small statistics kit for the sweep reports: log-log slope fits, exact 1D
//! k-means and the gap statistic, and bin/L1 helpers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, Point, RealField};

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `ln y`.
    pub residual: f64,
    pub points: usize,
}

/// Fits `ln y = slope · ln x + intercept` over the pairs with `x, y > 0`.
/// `None` with fewer than two usable pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum::<f64>() / n).sqrt();
    Some(SlopeFit { slope, intercept, residual, points: pts.len() })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Optimal 1D k-means by dynamic programming over sorted data. Returns the
/// within-cluster sum of squares and the cluster sizes in sorted order.
pub fn kmeans_1d(values: &[f64], k: usize) -> (f64, Vec<usize>) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 || k == 0 {
        return (0.0, Vec::new());
    }
    let k = k.min(n);
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for i in 0..n {
        s1[i + 1] = s1[i] + v[i];
        s2[i + 1] = s2[i] + v[i] * v[i];
    }
    // cost of one cluster holding v[i..j]
    let cost = |i: usize, j: usize| {
        let m = (j - i) as f64;
        let s = s1[j] - s1[i];
        (s2[j] - s2[i] - s * s / m).max(0.0)
    };
    let mut dp = vec![vec![f64::INFINITY; n + 1]; k + 1];
    let mut cut = vec![vec![0usize; n + 1]; k + 1];
    dp[0][0] = 0.0;
    for c in 1..=k {
        for j in c..=n {
            for i in (c - 1)..j {
                let candidate = dp[c - 1][i] + cost(i, j);
                if candidate < dp[c][j] {
                    dp[c][j] = candidate;
                    cut[c][j] = i;
                }
            }
        }
    }
    let mut sizes = Vec::with_capacity(k);
    let mut j = n;
    for c in (1..=k).rev() {
        let i = cut[c][j];
        sizes.push(j - i);
        j = i;
    }
    sizes.reverse();
    (dp[k][n], sizes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStatistic {
    pub clusters: usize,
    pub gaps: Vec<f64>,
    pub spreads: Vec<f64>,
    pub cluster_sizes: Vec<usize>,
}

/// Gap statistic with uniform reference sets over the data range. Picks the
/// smallest `k` with `gap(k) ≥ gap(k*) - s(k*)`, `k*` the global maximum
/// (the first-step rule stalls at `k = 1` for well-separated 1D groups).
pub fn gap_statistic(values: &[f64], max_k: usize, references: usize, seed: u64) -> GapStatistic {
    let n = values.len();
    if n < 2 {
        return GapStatistic { clusters: n, gaps: Vec::new(), spreads: Vec::new(), cluster_sizes: vec![n; n.min(1)] };
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_k = max_k.min(n - 1).max(1);
    let floor = 1e-300;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaps = Vec::with_capacity(max_k + 1);
    let mut spreads = Vec::with_capacity(max_k + 1);
    let refs: Vec<Vec<f64>> = (0..references)
        .map(|_| (0..n).map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo }).collect())
        .collect();
    for k in 1..=max_k + 1 {
        let w = kmeans_1d(values, k).0.max(floor).ln();
        let logs: Vec<f64> = refs.iter().map(|r| kmeans_1d(r, k).0.max(floor).ln()).collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let sd = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / logs.len() as f64).sqrt();
        gaps.push(mean - w);
        spreads.push(sd * (1.0 + 1.0 / references as f64).sqrt());
    }
    let best = (0..gaps.len()).fold(0, |b, k| if gaps[k] > gaps[b] { k } else { b });
    let clusters = (0..=best).find(|&k| gaps[k] >= gaps[best] - spreads[best]).unwrap_or(best) + 1;
    let cluster_sizes = kmeans_1d(values, clusters).1;
    GapStatistic { clusters, gaps, spreads, cluster_sizes }
}

/// Mass of a node-sampled density inside the rectangle `[lo, hi]`, each node
/// owning its cell `[x - dx/2, x + dx/2]` with uniform density.
pub fn rectangle_mass(rho: &RealField, lo: Point, hi: Point) -> f64 {
    let grid = rho.grid();
    let overlaps: Vec<Vec<(usize, f64)>> = (0..grid.dim())
        .map(|a| {
            let dx = grid.spacing(a);
            (0..grid.points(a))
                .filter_map(|i| {
                    let c = grid.coordinate(a, i);
                    let o = ((c + 0.5 * dx).min(hi[a]) - (c - 0.5 * dx).max(lo[a])).max(0.0);
                    (o > 0.0).then_some((i, o))
                })
                .collect()
        })
        .collect();
    let v = rho.values();
    if grid.dim() == 1 {
        overlaps[0].iter().map(|&(i, o)| v[i] * o).sum()
    } else {
        let mut total = 0.0;
        for &(i, oi) in &overlaps[0] {
            for &(j, oj) in &overlaps[1] {
                total += v[grid.flatten([i, j])] * oi * oj;
            }
        }
        total
    }
}

/// `Σ |p_b - q_b|` over bins formed by `block` consecutive cells per axis.
pub fn binned_l1(grid: &Grid, p: &[f64], q: &[f64], block: usize) -> f64 {
    let block = block.max(1);
    let cell = grid.cell_volume();
    let nb: Vec<usize> = (0..grid.dim()).map(|a| grid.points(a).div_ceil(block)).collect();
    let total_bins: usize = nb.iter().product();
    let mut diff = vec![0.0; total_bins];
    for i in 0..grid.len() {
        let idx = grid.unflatten(i);
        let b = if grid.dim() == 1 { idx[0] / block } else { (idx[0] / block) * nb[1] + idx[1] / block };
        diff[b] += (p[i] - q[i]) * cell;
    }
    diff.iter().map(|d| d.abs()).sum()
}

/// Equal-probability bin edges of a normal marginal (interior edges only).
pub fn normal_quantile_edges(mean: f64, sigma: f64, bins: usize) -> Vec<f64> {
    (1..bins).map(|k| mean + sigma * normal_quantile(k as f64 / bins as f64)).collect()
}

/// Inverse standard normal CDF (Acklam's rational approximation refined by
/// one Halley step; |error| < 1e-15 on (0, 1)).
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383577518672690e2, -3.066479806614716e1, 2.506628277459239];
    const B: [f64; 5] = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let plow = 0.02425;
    let x = if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}
