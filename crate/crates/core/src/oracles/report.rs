use serde::{Deserialize, Serialize};

use super::OracleKind;

/// Fixed-length packed bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BitVector {
    len: u32,
    words: Vec<u64>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len: len as u32,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub(crate) fn from_words(len: usize, words: Vec<u64>) -> Self {
        debug_assert_eq!(words.len(), len.div_ceil(64));
        Self {
            len: len as u32,
            words,
        }
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, bit: bool) {
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HmCoeff {
    pub index: u32,
    pub sign: i8,
}

/// One user's privatized message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Report {
    /// DE: a value in `[d]`.
    De(u32),
    /// SUE / OUE: a perturbed one-hot vector of length `d`.
    Ue(BitVector),
    /// BLH / OLH / FLH: the hash member index and a perturbed value in `[g]`.
    Lh { index: u32, value: u32 },
    /// HM: `t` sampled coefficient indices with their (perturbed) signs.
    Hm(Vec<HmCoeff>),
    /// HR: a coefficient index in `[D]`.
    Hr(u32),
}

impl Report {
    pub fn matches(&self, kind: OracleKind) -> bool {
        matches!(
            (self, kind),
            (Report::De(_), OracleKind::De)
                | (Report::Ue(_), OracleKind::Sue | OracleKind::Oue)
                | (Report::Lh { .. }, OracleKind::Blh | OracleKind::Olh | OracleKind::Flh)
                | (Report::Hm(_), OracleKind::Hm)
                | (Report::Hr(_), OracleKind::Hr)
        )
    }
}
