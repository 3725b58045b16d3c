//! Walsh–Hadamard matrix entries and the unscaled fast transform.
//!
//! Everything here uses the ±1 matrix `H[i][j] = (-1)^popcount(i & j)`; the
//! `D^{-1/2}` normalization is folded into the estimator constants.

use std::ops::{Add, Sub};

use crate::error::{Error, Result};

/// A power-of-two transform dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HadamardDim(usize);

impl HadamardDim {
    pub fn new(dim: usize) -> Result<Self> {
        if dim.is_power_of_two() {
            Ok(Self(dim))
        } else {
            Err(Error::NotPowerOfTwo(dim))
        }
    }

    /// Smallest power of two `>= n` (and `>= 1`).
    pub fn covering(n: usize) -> Self {
        Self(n.max(1).next_power_of_two())
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn log2(self) -> u32 {
        self.0.trailing_zeros()
    }
}

/// Unscaled entry without range checks.
#[inline]
pub fn entry(i: usize, j: usize) -> i8 {
    if (i & j).count_ones() % 2 == 0 {
        1
    } else {
        -1
    }
}

pub fn had_entry(i: usize, j: usize, dim: HadamardDim) -> Result<i8> {
    let d = dim.get();
    for idx in [i, j] {
        if idx >= d {
            return Err(Error::IndexOutOfRange {
                index: idx as u64,
                dim: d as u64,
            });
        }
    }
    Ok(entry(i, j))
}

/// In-place unscaled transform: `v[j] <- sum_i H[i][j] v[i]`.
pub fn fwht_in_place<T>(v: &mut [T]) -> Result<()>
where
    T: Copy + Add<Output = T> + Sub<Output = T>,
{
    let n = v.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut half = 1;
    while half < n {
        for block in v.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        half *= 2;
    }
    Ok(())
}

pub fn fwht<T>(v: &[T]) -> Result<Vec<T>>
where
    T: Copy + Add<Output = T> + Sub<Output = T>,
{
    let mut out = v.to_vec();
    fwht_in_place(&mut out)?;
    Ok(out)
}
