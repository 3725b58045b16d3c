//! Bloom filter decode: non-negative ridge regression over a candidate set.
//!
//! Each user picks a cohort and one of its `k` hash functions, then
//! privatizes the chosen bit position in `[m]`. The server estimates, per
//! cohort, how many reports set each bit and solves
//! `min ||A f - b||^2 + alpha ||f||^2` subject to `f >= 0`, where
//! `A[(cohort, j), x]` counts the hash functions of that cohort sending `x`
//! to bit `j` (divided by the cohort count) and `b = k * bit estimate`.

use super::{SketchConfig, SketchKind, SketchState};
use crate::error::{invalid, Result};

/// Stopping rule for the coordinate descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeOptions {
    pub max_sweeps: usize,
    /// Stop once no coordinate moved by more than `tol` (in counts).
    pub tol: f64,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 2000,
            tol: 1e-3,
        }
    }
}

/// The bit positions item `x` occupies: `(cohort * m + bit)`, one entry per
/// hash function.
pub fn bit_positions(cfg: &SketchConfig, x: u64) -> Vec<usize> {
    let (k, m) = (cfg.rows(), cfg.columns());
    (0..cfg.hash_count())
        .map(|row| (row / k) * m + cfg.cell(row, x))
        .collect()
}

/// Debiased per-cohort bit counts, scaled by `k`.
pub fn bit_targets(state: &SketchState) -> Vec<f64> {
    let k = state.config().rows() as f64;
    state
        .aggs()
        .iter()
        .flat_map(|a| a.estimate_all().into_iter().map(move |v| k * v))
        .collect()
}

pub fn decode(state: &SketchState, candidates: &[u64], alpha: f64) -> Result<Vec<f64>> {
    decode_with(state, candidates, alpha, RidgeOptions::default())
}

pub fn decode_with(
    state: &SketchState,
    candidates: &[u64],
    alpha: f64,
    opts: RidgeOptions,
) -> Result<Vec<f64>> {
    let cfg = state.config();
    if cfg.kind() != SketchKind::Bloom {
        return Err(invalid("bloom decode needs a Bloom filter state"));
    }
    if candidates.is_empty() {
        return Err(invalid("empty candidate set"));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("ridge penalty must be non-negative, got {alpha}")));
    }
    let b = bit_targets(state);
    let weight = 1.0 / cfg.cohorts() as f64;
    // Sparse columns: (row of A, value), duplicates merged.
    let columns: Vec<Vec<(usize, f64)>> = candidates
        .iter()
        .map(|&x| {
            let mut pos = bit_positions(cfg, x);
            pos.sort_unstable();
            let mut col: Vec<(usize, f64)> = Vec::with_capacity(pos.len());
            for p in pos {
                match col.last_mut() {
                    Some((q, v)) if *q == p => *v += weight,
                    _ => col.push((p, weight)),
                }
            }
            col
        })
        .collect();
    let norms: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|(_, v)| v * v).sum())
        .collect();
    let mut f = vec![0.0; candidates.len()];
    let mut resid = b;
    for _ in 0..opts.max_sweeps {
        let mut moved: f64 = 0.0;
        for (i, col) in columns.iter().enumerate() {
            let denom = norms[i] + alpha;
            if denom == 0.0 {
                continue;
            }
            let dot: f64 = col.iter().map(|&(p, v)| v * resid[p]).sum();
            let new = ((dot + norms[i] * f[i]) / denom).max(0.0);
            let delta = new - f[i];
            if delta != 0.0 {
                for &(p, v) in col {
                    resid[p] -= v * delta;
                }
                f[i] = new;
                moved = moved.max(delta.abs());
            }
        }
        if moved <= opts.tol {
            break;
        }
    }
    Ok(f)
}
