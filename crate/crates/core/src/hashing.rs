//! Seeded hash families and the randomness source used by every encoder.
//!
//! A [`HashFamily`] is a deterministic function of `(family_seed, index, x)`.
//! Distinct `index` values select independent-looking members of the family,
//! which is how local-hashing clients communicate "their" hash function: they
//! send the index, never a function description.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SIGN_SALT: u64 = 0xD6E8_FEB8_6659_FD93;

/// SplitMix64 finalizer: a full-avalanche bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed, e.g. per user or per trial, from a master seed.
#[inline]
pub fn derive_seed(master: u64, id: u64) -> u64 {
    mix64(master ^ mix64(id.wrapping_add(GOLDEN)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HashMode {
    /// Keyed avalanche mixing reduced modulo the range.
    Universal,
    /// `(x + offset(index)) mod g`: collision free on `[0, g)`. Test hook for
    /// the exact-recovery checks.
    Injective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashFamily {
    seed: u64,
    range: u64,
    mode: HashMode,
}

impl HashFamily {
    pub fn new(seed: u64, range: u64) -> Result<Self> {
        if range < 2 {
            return Err(Error::InvalidRange(range));
        }
        Ok(Self {
            seed,
            range,
            mode: HashMode::Universal,
        })
    }

    pub fn injective(seed: u64, range: u64) -> Result<Self> {
        Ok(Self {
            mode: HashMode::Injective,
            ..Self::new(seed, range)?
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn range(&self) -> u64 {
        self.range
    }

    pub fn mode(&self) -> HashMode {
        self.mode
    }

    pub fn is_injective(&self) -> bool {
        self.mode == HashMode::Injective
    }

    /// Same seed and mode, different output range.
    pub fn with_range(&self, range: u64) -> Result<Self> {
        Ok(Self {
            mode: self.mode,
            ..Self::new(self.seed, range)?
        })
    }

    /// Probability that two distinct items collide under a random member.
    pub fn collision_probability(&self) -> f64 {
        match self.mode {
            HashMode::Universal => 1.0 / self.range as f64,
            HashMode::Injective => 0.0,
        }
    }

    #[inline]
    pub fn hash(&self, index: u64, x: u64) -> u64 {
        self.member(index).hash(x)
    }

    /// `+1` or `-1`, from bits independent of [`hash`](Self::hash).
    #[inline]
    pub fn sign_hash(&self, index: u64, x: u64) -> i8 {
        let k = mix64(self.seed ^ SIGN_SALT ^ index.wrapping_mul(GOLDEN));
        if mix64(k ^ mix64(x)) >> 63 == 0 {
            1
        } else {
            -1
        }
    }

    /// Fix the member index so repeated evaluation skips the key schedule.
    #[inline]
    pub fn member(&self, index: u64) -> Member {
        let key = match self.mode {
            HashMode::Universal => mix64(self.seed ^ index.wrapping_mul(GOLDEN)),
            HashMode::Injective => mix64(self.seed ^ index) % self.range,
        };
        Member {
            key,
            range: self.range,
            mode: self.mode,
        }
    }
}

/// One member of a [`HashFamily`].
#[derive(Debug, Clone, Copy)]
pub struct Member {
    key: u64,
    range: u64,
    mode: HashMode,
}

impl Member {
    #[inline]
    pub fn hash(&self, x: u64) -> u64 {
        self.hash_premixed(mix64(x), x)
    }

    /// Variant for hot loops that precompute `mix64(x)` once per item.
    #[inline]
    pub fn hash_premixed(&self, mixed_x: u64, x: u64) -> u64 {
        match self.mode {
            HashMode::Universal => mix64(self.key ^ mixed_x) % self.range,
            HashMode::Injective => (x % self.range + self.key) % self.range,
        }
    }
}

/// Deterministic, portable random stream (ChaCha8).
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seed_from(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream for user `id` under `master`.
    pub fn for_user(master: u64, id: u64) -> Self {
        Self::seed_from(derive_seed(master, id))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on `[0, n)`.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.inner.gen_range(0..n)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            self.unit() < p
        }
    }

    /// Number of failures before the first success of a `Bernoulli(p)` run.
    #[inline]
    pub fn geometric(&mut self, p: f64) -> u64 {
        if p >= 1.0 {
            return 0;
        }
        if p <= 0.0 {
            return u64::MAX;
        }
        // 1 - unit() lies in (0, 1], so the log is finite.
        let u = 1.0 - self.unit();
        let g = (u.ln() / (-p).ln_1p()).floor();
        if g >= u64::MAX as f64 {
            u64::MAX
        } else {
            g as u64
        }
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
