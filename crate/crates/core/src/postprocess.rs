//! Consistency rules applied to a full-domain estimate vector.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateVector<T> {
    pub values: Vec<T>,
    /// Number of reports the estimates were built from.
    pub n: T,
}

impl<T: Scalar> EstimateVector<T> {
    pub fn new(values: Vec<T>, n: T) -> Self {
        Self { values, n }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> T {
        sum(&self.values)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostMethod {
    #[default]
    None,
    NonNeg,
    Additive,
    Simplex,
    Threshold,
}

impl PostMethod {
    pub const ALL: [PostMethod; 5] = [
        PostMethod::None,
        PostMethod::NonNeg,
        PostMethod::Additive,
        PostMethod::Simplex,
        PostMethod::Threshold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PostMethod::None => "none",
            PostMethod::NonNeg => "nonneg",
            PostMethod::Additive => "additive",
            PostMethod::Simplex => "simplex",
            PostMethod::Threshold => "threshold",
        }
    }
}

impl fmt::Display for PostMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PostMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown post-processing method {s:?}")))
    }
}

fn sum<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a + b)
}

fn clamp<T: Scalar>(v: T) -> T {
    v.max_of(T::zero())
}

/// Indices sorted by value, largest first; equal values keep index order.
fn descending<T: Scalar>(v: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap_or(Ordering::Equal));
    idx
}

pub fn post_process<T: Scalar>(est: &EstimateVector<T>, method: PostMethod) -> Result<EstimateVector<T>> {
    if est.n < T::zero() {
        return Err(invalid(format!("report count must be non-negative, got {:?}", est.n)));
    }
    if let Some(bad) = est.values.iter().find(|v| !v.as_f64().is_finite()) {
        return Err(invalid(format!("non-finite estimate {bad:?}")));
    }
    let n = est.n;
    let values = match method {
        PostMethod::None => est.values.clone(),
        PostMethod::NonNeg => est.values.iter().map(|&v| clamp(v)).collect(),
        PostMethod::Additive => additive(&est.values, n),
        PostMethod::Simplex => simplex(&est.values, n),
        PostMethod::Threshold => threshold(&est.values, n),
    };
    Ok(EstimateVector { values, n })
}

/// Zero the negatives, then shift the positives by a common `delta` so they
/// sum to `n`. A negative shift can push small entries below zero; those are
/// dropped and `delta` recomputed until nothing changes.
fn additive<T: Scalar>(v: &[T], n: T) -> Vec<T> {
    let zero = T::zero();
    let mut active: Vec<bool> = v.iter().map(|&x| x > zero).collect();
    loop {
        let (count, total) = v
            .iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .fold((0usize, zero), |(c, s), (&x, _)| (c + 1, s + x));
        if count == 0 {
            return vec![zero; v.len()];
        }
        let delta = (n - total) / T::of_usize(count);
        let mut changed = false;
        for (a, &x) in active.iter_mut().zip(v) {
            if *a && x + delta <= zero {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            return v
                .iter()
                .zip(&active)
                .map(|(&x, &a)| if a { x + delta } else { zero })
                .collect();
        }
    }
}

/// Euclidean projection onto `{f >= 0, sum f = n}` by sorting.
fn simplex<T: Scalar>(v: &[T], n: T) -> Vec<T> {
    let zero = T::zero();
    let order = descending(v);
    let mut prefix = zero;
    let mut tau = None;
    for (j, &i) in order.iter().enumerate() {
        prefix = prefix + v[i];
        let t = (prefix - n) / T::of_usize(j + 1);
        if v[i] - t > zero {
            tau = Some(t);
        }
    }
    match tau {
        Some(t) => v.iter().map(|&x| clamp(x - t)).collect(),
        // Only n = 0 leaves no positive coordinate.
        None => vec![zero; v.len()],
    }
}

/// Keep the largest entries until their running total first exceeds `n`
/// (that entry included); zero the rest.
fn threshold<T: Scalar>(v: &[T], n: T) -> Vec<T> {
    let mut out = vec![T::zero(); v.len()];
    let mut total = T::zero();
    for i in descending(v) {
        out[i] = v[i];
        total = total + v[i];
        if total > n {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::Rng;
    use num_rational::Rational64;
    use proptest::prelude::*;

    fn run(v: &[f64], n: f64, m: PostMethod) -> Vec<f64> {
        post_process(&EstimateVector::new(v.to_vec(), n), m).unwrap().values
    }

    #[test]
    fn examples() {
        assert_eq!(run(&[-2.0, 5.0, 3.0], 8.0, PostMethod::NonNeg), vec![0.0, 5.0, 3.0]);
        assert_eq!(run(&[-2.0, 6.0, 3.0], 10.0, PostMethod::Additive), vec![0.0, 6.5, 3.5]);
        let s = run(&[0.6, 0.5, 0.2], 1.0, PostMethod::Simplex);
        for (a, b) in s.iter().zip([0.5, 0.4, 0.1]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(
            run(&[6.0, 5.0, 3.0, -1.0], 10.0, PostMethod::Threshold),
            vec![6.0, 5.0, 0.0, 0.0]
        );
        assert_eq!(run(&[1.0, -1.0], 3.0, PostMethod::None), vec![1.0, -1.0]);
    }

    #[test]
    fn additive_fixed_point_drops_small_entries() {
        // First pass: delta = (4 - 12) / 3 = -8/3 pushes 1 below zero; then
        // delta = (4 - 11) / 2 = -3.5.
        let out = run(&[1.0, 5.0, 6.0], 4.0, PostMethod::Additive);
        assert_eq!(out, vec![0.0, 1.5, 2.5]);
    }

    #[test]
    fn exact_in_rationals() {
        let r = |a, b| Rational64::new(a, b);
        let e = EstimateVector::new(vec![r(3, 5), r(1, 2), r(1, 5)], r(1, 1));
        let out = post_process(&e, PostMethod::Simplex).unwrap();
        assert_eq!(out.values, vec![r(1, 2), r(2, 5), r(1, 10)]);
        let out = post_process(&e, PostMethod::Additive).unwrap();
        assert_eq!(out.total(), r(1, 1));
    }

    #[test]
    fn generic_over_f32() {
        let e = EstimateVector::new(vec![-2.0f32, 6.0, 3.0], 10.0);
        assert_eq!(post_process(&e, PostMethod::Additive).unwrap().values, vec![0.0, 6.5, 3.5]);
    }

    #[test]
    fn errors() {
        assert!(post_process(&EstimateVector::new(vec![1.0], -1.0), PostMethod::None).is_err());
        assert!(post_process(&EstimateVector::new(vec![f64::NAN], 1.0), PostMethod::None).is_err());
        assert_eq!("Simplex".parse::<PostMethod>().unwrap(), PostMethod::Simplex);
        assert!("round".parse::<PostMethod>().is_err());
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(run(&[-1.0, -2.0], 5.0, PostMethod::Additive), vec![0.0, 0.0]);
        assert_eq!(run(&[3.0, 1.0], 0.0, PostMethod::Simplex), vec![0.0, 0.0]);
        assert_eq!(run(&[], 0.0, PostMethod::Threshold), Vec::<f64>::new());
    }

    /// Projected gradient descent on `||f - v||^2` over the scaled simplex,
    /// using bisection for the projection step so it shares no code with the
    /// sort-based routine.
    fn qp_oracle(v: &[f64], n: f64) -> Vec<f64> {
        let project = |y: &[f64]| -> Vec<f64> {
            let (mut lo, mut hi) = (-1e6, 1e6);
            for _ in 0..200 {
                let mid = (lo + hi) / 2.0;
                let s: f64 = y.iter().map(|&x| (x - mid).max(0.0)).sum();
                if s > n {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let tau = (lo + hi) / 2.0;
            y.iter().map(|&x| (x - tau).max(0.0)).collect()
        };
        let mut f = vec![n / v.len() as f64; v.len()];
        for _ in 0..80 {
            let step: Vec<f64> = f.iter().zip(v).map(|(a, b)| a - 0.25 * 2.0 * (a - b)).collect();
            f = project(&step);
        }
        f
    }

    #[test]
    fn simplex_matches_qp_oracle() {
        let mut rng = Rng::seed_from(5);
        for _ in 0..200 {
            let dim = 1 + rng.below(5) as usize;
            let v: Vec<f64> = (0..dim).map(|_| rng.unit() * 20.0 - 8.0).collect();
            let n = rng.unit() * 10.0;
            let fast = run(&v, n, PostMethod::Simplex);
            let slow = qp_oracle(&v, n);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-6, "{v:?} n={n}: {fast:?} vs {slow:?}");
            }
        }
    }

    fn order_kept(before: &[f64], after: &[f64]) -> bool {
        for i in 0..before.len() {
            for j in 0..before.len() {
                if after[i] > 0.0 && after[j] > 0.0 && before[i] < before[j] && after[i] >= after[j] {
                    return false;
                }
            }
        }
        true
    }

    proptest! {
        #[test]
        fn invariants(v in proptest::collection::vec(-100.0f64..100.0, 1..40), n in 0.0f64..500.0) {
            for m in [PostMethod::NonNeg, PostMethod::Additive, PostMethod::Simplex] {
                let out = run(&v, n, m);
                prop_assert!(out.iter().all(|&x| x >= 0.0), "{m}");
                prop_assert!(order_kept(&v, &out), "{m}");
            }
            let positives = v.iter().any(|&x| x > 0.0);
            if positives {
                let s: f64 = run(&v, n, PostMethod::Additive).iter().sum();
                prop_assert!((s - n).abs() <= 1e-6 * n.max(1.0));
            }
            let s: f64 = run(&v, n, PostMethod::Simplex).iter().sum();
            prop_assert!((s - n).abs() <= 1e-6 * n.max(1.0));
            let t = run(&v, n, PostMethod::Threshold);
            prop_assert!(order_kept(&v, &t));
        }
    }
}
