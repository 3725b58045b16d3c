//! Error and retrieval metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub k_mse: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub time_client_ms: f64,
    pub time_server_ms: f64,
}

/// Mean squared error over the whole domain.
pub fn mse<T: Scalar>(est: &[T], truth: &[T]) -> Result<T> {
    if est.len() != truth.len() || est.is_empty() {
        return Err(invalid(format!(
            "estimate length {} does not match domain {}",
            est.len(),
            truth.len()
        )));
    }
    let total = est
        .iter()
        .zip(truth)
        .fold(T::zero(), |acc, (&e, &t)| acc + (e - t) * (e - t));
    Ok(total / T::of_usize(est.len()))
}

/// Indices of the `k` largest true counts; ties go to the smaller index.
pub fn top_k<T: Scalar>(truth: &[T], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > truth.len() {
        return Err(invalid(format!("k = {k} must lie in [1, {}]", truth.len())));
    }
    let mut idx: Vec<usize> = (0..truth.len()).collect();
    idx.sort_by(|&a, &b| {
        truth[b]
            .partial_cmp(&truth[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    Ok(idx)
}

/// MSE restricted to the true top-`k` items.
pub fn k_mse<T: Scalar>(est: &[T], truth: &[T], k: usize) -> Result<T> {
    if est.len() != truth.len() {
        return Err(invalid("estimate and truth lengths differ"));
    }
    let top = top_k(truth, k)?;
    let total = top
        .iter()
        .fold(T::zero(), |acc, &i| acc + (est[i] - truth[i]) * (est[i] - truth[i]));
    Ok(total / T::of_usize(k))
}

/// Precision, recall and F1 of a discovered set against the true set.
pub fn precision_recall_f1<S: Ord>(discovered: &[S], truth: &[S]) -> (f64, f64, f64) {
    let found: BTreeSet<&S> = discovered.iter().collect();
    let want: BTreeSet<&S> = truth.iter().collect();
    let hits = found.intersection(&want).count() as f64;
    let p = if found.is_empty() { 0.0 } else { hits / found.len() as f64 };
    let r = if want.is_empty() { 0.0 } else { hits / want.len() as f64 };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

/// Mean and sample standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
