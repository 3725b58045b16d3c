//! Domain reduction: Count-Min and Count sketches (and a Bloom filter in
//! [`bloom`]) wrapped around any frequency oracle.
//!
//! Each user samples one row `l`, hashes the item into `[c]` with `h_l` and
//! privatizes that cell with the inner oracle. Row estimates are scaled by
//! `r` to undo the row sampling and then combined across rows.

pub mod bloom;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hashing::{HashFamily, Rng};
use crate::oracles::codec::{read_report, read_varint, write_report, write_varint};
use crate::oracles::{encode_signed, AggState, OracleKind, PureParams, Report};
use crate::postprocess::{post_process, EstimateVector, PostMethod};

const ROW_SALT: u64 = 0x5EED_0F0F_A11C_E5E5;
const SIGN_SALT: u64 = 0x0B5E_55ED_516E_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchKind {
    Bloom,
    #[serde(rename = "cm")]
    CountMin,
    #[serde(rename = "cs")]
    CountSketch,
}

impl SketchKind {
    pub fn name(self) -> &'static str {
        match self {
            SketchKind::Bloom => "BF",
            SketchKind::CountMin => "CM",
            SketchKind::CountSketch => "CS",
        }
    }
}

impl fmt::Display for SketchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cm" | "count-min" | "countmin" => Ok(SketchKind::CountMin),
            "cs" | "count-sketch" | "countsketch" => Ok(SketchKind::CountSketch),
            "bf" | "bloom" => Ok(SketchKind::Bloom),
            _ => Err(invalid(format!("unknown sketch kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    Min,
    #[default]
    Mean,
    Median,
}

impl Combine {
    pub fn name(self) -> &'static str {
        match self {
            Combine::Min => "min",
            Combine::Mean => "mean",
            Combine::Median => "median",
        }
    }
}

impl fmt::Display for Combine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Combine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Combine::Min, Combine::Mean, Combine::Median]
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown combine rule {s:?}")))
    }
}

/// Geometry and hashing of a sketch around an inner oracle over `[c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchConfig {
    kind: SketchKind,
    /// Rows (CM/CS) or hash functions per cohort (Bloom).
    r: usize,
    /// Columns (CM/CS) or filter bits (Bloom).
    c: usize,
    combine: Combine,
    cohorts: usize,
    inner: PureParams,
    row_family: HashFamily,
    sign_family: HashFamily,
    force_positive_sign: bool,
}

impl SketchConfig {
    /// `inner` must be built over domain `c`. Hash families are derived from
    /// `seed`.
    pub fn new(kind: SketchKind, r: usize, c: usize, inner: PureParams, seed: u64) -> Result<Self> {
        if r == 0 {
            return Err(invalid("sketch needs at least one row"));
        }
        if c < 2 {
            return Err(invalid(format!("sketch needs at least two columns, got {c}")));
        }
        if inner.domain() != c {
            return Err(invalid(format!(
                "inner oracle covers {} cells but the sketch has {c}",
                inner.domain()
            )));
        }
        if r > u32::MAX as usize {
            return Err(invalid(format!("{r} rows exceed the report format")));
        }
        Ok(Self {
            kind,
            r,
            c,
            combine: Combine::Mean,
            cohorts: 1,
            inner,
            row_family: HashFamily::new(seed ^ ROW_SALT, c as u64)?,
            sign_family: HashFamily::new(seed ^ SIGN_SALT, 2)?,
            force_positive_sign: false,
        })
    }

    pub fn with_combine(mut self, combine: Combine) -> Result<Self> {
        if self.kind == SketchKind::CountSketch && combine == Combine::Min {
            return Err(invalid("MIN is meaningless over signed Count sketch cells"));
        }
        self.combine = combine;
        Ok(self)
    }

    /// Bloom only: independent hash sets, one chosen per user.
    pub fn with_cohorts(mut self, cohorts: usize) -> Result<Self> {
        if cohorts == 0 || (cohorts * self.r) > u32::MAX as usize {
            return Err(invalid(format!("invalid cohort count {cohorts}")));
        }
        if cohorts > 1 && self.kind != SketchKind::Bloom {
            return Err(invalid("cohorts apply to Bloom filters only"));
        }
        self.cohorts = cohorts;
        Ok(self)
    }

    /// Test hook: collision-free row hashes on `[0, c)`.
    pub fn with_injective_rows(mut self) -> Result<Self> {
        self.row_family = HashFamily::injective(self.row_family.seed(), self.c as u64)?;
        Ok(self)
    }

    /// Test hook: every Count sketch sign is `+1`.
    pub fn with_positive_signs(mut self) -> Self {
        self.force_positive_sign = true;
        self
    }

    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.r
    }

    pub fn columns(&self) -> usize {
        self.c
    }

    pub fn combine(&self) -> Combine {
        self.combine
    }

    pub fn cohorts(&self) -> usize {
        self.cohorts
    }

    pub fn inner(&self) -> &PureParams {
        &self.inner
    }

    pub fn row_family(&self) -> &HashFamily {
        &self.row_family
    }

    /// Number of distinct hash functions (`r`, or `k * cohorts` for Bloom).
    pub fn hash_count(&self) -> usize {
        self.r * self.cohorts
    }

    #[inline]
    pub fn cell(&self, row: usize, x: u64) -> usize {
        self.row_family.hash(row as u64, x) as usize
    }

    #[inline]
    pub fn sign(&self, row: usize, x: u64) -> i8 {
        if self.force_positive_sign {
            1
        } else {
            self.sign_family.sign_hash(row as u64, x)
        }
    }

    fn signed_reports(&self) -> bool {
        self.kind == SketchKind::CountSketch && self.inner.kind() != OracleKind::Hm
    }

    pub fn describe(&self) -> String {
        match self.kind {
            SketchKind::Bloom => format!("BF(k={},m={},cohorts={})", self.r, self.c, self.cohorts),
            k => format!("{}({})", k, self.combine),
        }
    }
}

/// One user's message: the sampled row (or hash choice), the inner report
/// and, for Count sketches, the sign carried outside an HM report.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SketchReport {
    pub row: u32,
    pub sign: i8,
    pub inner: Report,
}

impl SketchReport {
    /// Inner record, then the row as a varint, then one sign byte for Count
    /// sketches.
    pub fn write(&self, out: &mut Vec<u8>, with_sign: bool) {
        write_report(out, &self.inner);
        write_varint(out, self.row as u64);
        if with_sign {
            out.push(if self.sign < 0 { 0xff } else { 0x01 });
        }
    }

    pub fn read(buf: &mut &[u8], with_sign: bool) -> Result<Self> {
        let inner = read_report(buf)?;
        let row = read_varint(buf)?;
        let row = u32::try_from(row).map_err(|_| Error::Codec(format!("row {row} exceeds u32")))?;
        let sign = if with_sign {
            let (&b, rest) = buf
                .split_first()
                .ok_or_else(|| Error::Codec("missing sign byte".into()))?;
            *buf = rest;
            match b {
                0x01 => 1,
                0xff => -1,
                _ => return Err(Error::Codec(format!("bad sign byte {b:#x}"))),
            }
        } else {
            1
        };
        Ok(Self { row, sign, inner })
    }
}

pub fn sketch_encode(cfg: &SketchConfig, x: u64, rng: &mut Rng) -> Result<SketchReport> {
    let row = rng.below(cfg.hash_count() as u64) as usize;
    let cell = cfg.cell(row, x);
    let mut sign = 1;
    let negate = if cfg.kind == SketchKind::CountSketch {
        sign = cfg.sign(row, x);
        !cfg.signed_reports() && sign < 0
    } else {
        false
    };
    let inner = encode_signed(&cfg.inner, cell, negate, rng)?;
    Ok(SketchReport {
        row: row as u32,
        sign,
        inner,
    })
}

/// Server-side sketch aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchState {
    cfg: SketchConfig,
    /// CM / HM-inner CS: one per row. Other CS: positive rows then negative
    /// rows. Bloom: one per cohort.
    aggs: Vec<AggState>,
    /// Reports per row / hash choice.
    row_counts: Vec<f64>,
    n: f64,
}

impl SketchState {
    pub fn new(cfg: SketchConfig) -> Self {
        let slots = match cfg.kind {
            SketchKind::Bloom => cfg.cohorts,
            _ if cfg.signed_reports() => 2 * cfg.r,
            _ => cfg.r,
        };
        let aggs = vec![AggState::new(cfg.inner.clone()); slots];
        let row_counts = vec![0.0; cfg.hash_count()];
        Self {
            cfg,
            aggs,
            row_counts,
            n: 0.0,
        }
    }

    pub fn config(&self) -> &SketchConfig {
        &self.cfg
    }

    pub fn n_reports(&self) -> f64 {
        self.n
    }

    pub fn row_counts(&self) -> &[f64] {
        &self.row_counts
    }

    pub fn add(&mut self, report: &SketchReport) -> Result<()> {
        self.add_weighted(report, 1.0)
    }

    pub fn add_weighted(&mut self, report: &SketchReport, w: f64) -> Result<()> {
        let row = report.row as usize;
        if row >= self.cfg.hash_count() {
            return Err(Error::MixedParameters(format!("row {row} outside the sketch")));
        }
        if report.sign.abs() != 1 {
            return Err(Error::MixedParameters(format!("bad sign {}", report.sign)));
        }
        let slot = match self.cfg.kind {
            SketchKind::Bloom => row / self.cfg.r,
            _ if self.cfg.signed_reports() && report.sign < 0 => self.cfg.r + row,
            _ => row,
        };
        self.aggs[slot].add_weighted(&report.inner, w)?;
        self.row_counts[row] += w;
        self.n += w;
        Ok(())
    }

    pub fn merge(&mut self, other: &SketchState) -> Result<()> {
        if self.cfg != other.cfg {
            return Err(Error::MixedParameters("sketch configurations differ".into()));
        }
        for (a, b) in self.aggs.iter_mut().zip(&other.aggs) {
            a.merge(b)?;
        }
        for (a, b) in self.row_counts.iter_mut().zip(&other.row_counts) {
            *a += *b;
        }
        self.n += other.n;
        Ok(())
    }

    pub(crate) fn aggs(&self) -> &[AggState] {
        &self.aggs
    }

    /// Decode every row once so item queries are table lookups.
    pub fn finalize(&self) -> Result<SketchEstimator> {
        self.finalize_with(PostMethod::None)
    }

    /// As [`finalize`](Self::finalize), additionally post-processing each
    /// row's cell vector against that row's report count.
    pub fn finalize_with(&self, row_post: PostMethod) -> Result<SketchEstimator> {
        if self.cfg.kind == SketchKind::Bloom {
            return Err(invalid("Bloom filters are decoded with bloom::decode"));
        }
        let r = self.cfg.r;
        let mut rows = Vec::with_capacity(r);
        for l in 0..r {
            let mut cells = self.aggs[l].estimate_all();
            if self.cfg.signed_reports() {
                let neg = self.aggs[r + l].estimate_all();
                for (a, b) in cells.iter_mut().zip(neg) {
                    *a -= b;
                }
            }
            if row_post != PostMethod::None {
                let est = EstimateVector::new(cells, self.row_counts[l]);
                cells = post_process(&est, row_post)?.values;
            }
            rows.push(cells);
        }
        Ok(SketchEstimator {
            cfg: self.cfg.clone(),
            rows,
            n: self.n,
        })
    }
}

pub fn sketch_aggregate<'a, I>(cfg: &SketchConfig, reports: I) -> Result<SketchState>
where
    I: IntoIterator<Item = &'a SketchReport>,
{
    let mut s = SketchState::new(cfg.clone());
    for r in reports {
        s.add(r)?;
    }
    Ok(s)
}

/// Decoded rows of a CM / CS sketch.
#[derive(Debug, Clone)]
pub struct SketchEstimator {
    cfg: SketchConfig,
    rows: Vec<Vec<f64>>,
    n: f64,
}

impl SketchEstimator {
    /// Per-row estimates `y_l`, already scaled by `r` (and signed for CS).
    pub fn row_values(&self, x: u64) -> Vec<f64> {
        let r = self.cfg.r as f64;
        (0..self.cfg.r)
            .map(|l| {
                let v = r * self.rows[l][self.cfg.cell(l, x)];
                if self.cfg.kind == SketchKind::CountSketch {
                    v * self.cfg.sign(l, x) as f64
                } else {
                    v
                }
            })
            .collect()
    }

    pub fn estimate(&self, x: u64) -> f64 {
        self.estimate_with(x, self.cfg.combine)
    }

    pub fn estimate_with(&self, x: u64, combine: Combine) -> f64 {
        let mut y = self.row_values(x);
        match combine {
            Combine::Min => y.iter().copied().fold(f64::INFINITY, f64::min),
            Combine::Median => median(&mut y),
            Combine::Mean => {
                let mean = y.iter().sum::<f64>() / y.len() as f64;
                // Signed cells cancel collisions in expectation.
                let kappa = if self.cfg.kind == SketchKind::CountSketch && !self.cfg.force_positive_sign {
                    0.0
                } else {
                    self.cfg.row_family.collision_probability()
                };
                (mean - kappa * self.n) / (1.0 - kappa)
            }
        }
    }

    pub fn estimate_all(&self, d: u64) -> Vec<f64> {
        (0..d).map(|x| self.estimate(x)).collect()
    }

    pub fn n_reports(&self) -> f64 {
        self.n
    }
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}
