//! Exhaustive grid maximization of the dual for tiny problems.
//!
//! The dual is evaluated through the Gram matrix of `yᵢx̃ᵢ`, which shares no
//! code with the solver or with [`crate::model::dual_objective`].

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Hyperparams;

/// Largest `n` accepted by [`brute_force_dual`].
pub const MAX_GRID_SAMPLES: usize = 4;

/// Maximizes the dual over the grid `{0, C/k, …, C}ⁿ` with `k = grid_steps`.
/// Returns the best grid point and its dual value.
pub fn brute_force_dual(ds: &Dataset, hp: &Hyperparams, grid_steps: usize) -> Result<(Vec<f64>, f64)> {
    let n = ds.n();
    if n > MAX_GRID_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "grid oracle supports at most {MAX_GRID_SAMPLES} samples, got {n}"
        )));
    }
    if grid_steps == 0 {
        return Err(Error::InvalidParameter("grid_steps must be positive".into()));
    }
    let h = hp.c / grid_steps as f64;
    let mut gram = [[0.0f64; MAX_GRID_SAMPLES]; MAX_GRID_SAMPLES];
    for (i, row) in gram.iter_mut().enumerate().take(n) {
        for (j, g) in row.iter_mut().enumerate().take(n) {
            *g = ds.y(i) * ds.y(j) * ds.row(i).iter().zip(ds.row(j)).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let rho: Vec<f64> = (0..n).map(|i| ds.radius(i)).collect();
    let last = n - 1;

    let mut best_value = f64::NEG_INFINITY;
    let mut best_point = vec![0.0; n];
    let mut counter = vec![0usize; last];
    loop {
        let outer: Vec<f64> = counter.iter().map(|&k| k as f64 * h).collect();
        let mut quad = 0.0;
        let mut cross = 0.0;
        for (i, &ai) in outer.iter().enumerate() {
            for (j, &aj) in outer.iter().enumerate() {
                quad += ai * aj * gram[i][j];
            }
            cross += ai * gram[i][last];
        }
        let sum0: f64 = outer.iter().sum();
        let s0: f64 = outer.iter().zip(&rho).map(|(a, r)| a * r).sum();
        let g_ll = gram[last][last];
        for k in 0..=grid_steps {
            let a = k as f64 * h;
            let norm = (quad + 2.0 * a * cross + a * a * g_ll).max(0.0).sqrt();
            let excess = (norm - s0 - a * rho[last]).max(0.0);
            let value = sum0 + a - 0.5 * excess * excess;
            if value > best_value {
                best_value = value;
                best_point[..last].copy_from_slice(&outer);
                best_point[last] = a;
            }
        }
        // Odometer over the outer coordinates.
        let mut pos = 0;
        while pos < last {
            counter[pos] += 1;
            if counter[pos] <= grid_steps {
                break;
            }
            counter[pos] = 0;
            pos += 1;
        }
        if pos == last {
            break;
        }
    }
    Ok((best_point, best_value))
}
