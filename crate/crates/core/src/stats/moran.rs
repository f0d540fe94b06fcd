//! Moran's I spatial autocorrelation on a rectangular cell grid.
//!
//! The weight matrix is binary rook adjacency (4-neighborhood) over the
//! row-major layout of the value vector. The permutation null holds the
//! grid fixed and shuffles values across positions.

use crate::error::{Error, Result};
use crate::seed;
use crate::stats::check_finite;
use rand::seq::SliceRandom;

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct MoranResult {
    pub i: f64,
    /// Two-sided permutation p-value, centered on the exact null mean.
    pub p: f64,
    /// Null expectation -1/(N-1).
    pub expected_i: f64,
    /// Number of permutations behind `p` (the full factorial when the exact
    /// enumeration path was taken).
    pub permutations_used: usize,
}

/// Moran's I with a permutation test.
///
/// `values.len()` must be a positive multiple of `grid_width`. The p-value
/// is exact (all N! relabelings) for N <= 8; otherwise it comes from
/// `permutations` seeded shuffles and is deterministic for a given seed.
///
/// Errors on a constant field (no spatial signal is defined) and on
/// degenerate grid shapes.
pub fn morans_i(
    values: &[f64],
    grid_width: usize,
    permutations: usize,
    seed_value: u64,
) -> Result<MoranResult> {
    let n = values.len();
    if grid_width == 0 || n == 0 || n % grid_width != 0 {
        return Err(Error::Contract(format!(
            "grid of {n} values is not a multiple of width {grid_width}"
        )));
    }
    if permutations == 0 {
        return Err(Error::invalid("permutations", "must be >= 1"));
    }
    check_finite(values)?;
    let rows = n / grid_width;
    if n < 2 {
        return Err(Error::Degenerate("single-cell grid".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom == 0.0 {
        return Err(Error::Degenerate("constant field; Moran's I undefined".into()));
    }

    // Total rook weight, counting each ordered pair once per direction.
    let w_total = 2.0 * ((rows * (grid_width - 1)) + (grid_width * (rows - 1))) as f64;
    if w_total == 0.0 {
        return Err(Error::Degenerate("grid has no adjacent pairs".into()));
    }
    let scale = n as f64 / (w_total * denom);
    let i_obs = cross_product(&dev, rows, grid_width) * scale;
    let expected = -1.0 / (n as f64 - 1.0);

    // Shuffling deviations is equivalent to shuffling values: the mean is
    // permutation-invariant, and so is the denominator.
    let (p, used) = if factorial_at_most(n, 40_320) {
        let mut hits = 0usize;
        let mut total = 0usize;
        permute_all(&mut dev, rows, grid_width, scale, &mut |i_perm| {
            total += 1;
            if (i_perm - expected).abs() >= (i_obs - expected).abs() - 1e-12 {
                hits += 1;
            }
        });
        (hits as f64 / total as f64, total)
    } else {
        let mut rng = seed::rng(seed::derive(seed_value, seed::purpose::PERMUTATION, 0));
        let mut hits = 0usize;
        for _ in 0..permutations {
            dev.shuffle(&mut rng);
            let i_perm = cross_product(&dev, rows, grid_width) * scale;
            if (i_perm - expected).abs() >= (i_obs - expected).abs() - 1e-12 {
                hits += 1;
            }
        }
        ((1 + hits) as f64 / (permutations + 1) as f64, permutations)
    };

    Ok(MoranResult { i: i_obs, p, expected_i: expected, permutations_used: used })
}

/// Sum of dev[i]*dev[j] over ordered rook-adjacent pairs.
fn cross_product(dev: &[f64], rows: usize, cols: usize) -> f64 {
    let mut acc = 0.0;
    for r in 0..rows {
        let base = r * cols;
        for c in 0..cols {
            let idx = base + c;
            let d = dev[idx];
            if c + 1 < cols {
                acc += d * dev[idx + 1];
            }
            if r + 1 < rows {
                acc += d * dev[idx + cols];
            }
        }
    }
    2.0 * acc
}

fn factorial_at_most(n: usize, limit: usize) -> bool {
    let mut f = 1usize;
    for k in 2..=n {
        f = match f.checked_mul(k) {
            Some(v) if v <= limit => v,
            _ => return false,
        };
    }
    true
}

/// Heap's algorithm; calls `visit` with Moran's I of every permutation.
fn permute_all(
    dev: &mut [f64],
    rows: usize,
    cols: usize,
    scale: f64,
    visit: &mut impl FnMut(f64),
) {
    let n = dev.len();
    let mut c = vec![0usize; n];
    visit(cross_product(dev, rows, cols) * scale);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                dev.swap(0, i);
            } else {
                dev.swap(c[i], i);
            }
            visit(cross_product(dev, rows, cols) * scale);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}
