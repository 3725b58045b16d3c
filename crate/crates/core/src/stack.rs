//! A frequency oracle optionally wrapped in a sketch, over items `0..d`.
//!
//! [`StackSpec`] is the domain-independent recipe (oracle, options, sketch
//! geometry); [`StackSpec::build`] instantiates it for a privacy budget and
//! domain so heavy-hitter phases can reuse one recipe at many domain sizes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hashing::{derive_seed, Rng};
use crate::oracles::{encode, oracle_params, AggState, OracleKind, OracleOptions, PureParams, Report};
use crate::postprocess::PostMethod;
use crate::sketch::{bloom, sketch_encode, Combine, SketchConfig, SketchEstimator, SketchKind, SketchReport, SketchState};

/// Sketch geometry, independent of the inner oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchSpec {
    pub kind: SketchKind,
    pub r: usize,
    pub c: usize,
    pub combine: Combine,
    /// Bloom only.
    pub cohorts: usize,
    /// Bloom only: ridge penalty.
    pub alpha: f64,
    /// Post-processing applied to each row before combining.
    pub row_post: PostMethod,
    /// Test hook: collision-free row hashes (needs `c >= d`).
    pub injective_rows: bool,
}

impl SketchSpec {
    pub fn new(kind: SketchKind, r: usize, c: usize) -> Self {
        Self {
            kind,
            r,
            c,
            combine: Combine::Mean,
            cohorts: 1,
            alpha: 0.005,
            row_post: PostMethod::None,
            injective_rows: false,
        }
    }

    pub fn count_min(r: usize, c: usize, combine: Combine) -> Self {
        Self {
            combine,
            ..Self::new(SketchKind::CountMin, r, c)
        }
    }

    pub fn describe(&self) -> String {
        match self.kind {
            SketchKind::Bloom => format!(
                "BF(k={},m={},cohorts={},alpha={})",
                self.r, self.c, self.cohorts, self.alpha
            ),
            k => format!("{k}({})", self.combine),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackSpec {
    pub oracle: OracleKind,
    pub opts: OracleOptions,
    pub sketch: Option<SketchSpec>,
}

impl StackSpec {
    pub fn oracle(kind: OracleKind, opts: OracleOptions) -> Self {
        Self {
            oracle: kind,
            opts,
            sketch: None,
        }
    }

    pub fn with_sketch(mut self, sketch: SketchSpec) -> Self {
        self.sketch = Some(sketch);
        self
    }

    /// Instantiate for budget `eps` over `[d]`. Hash families are derived
    /// from `seed`.
    pub fn build(&self, eps: f64, d: u64, seed: u64) -> Result<Stack> {
        if d < 2 {
            return Err(invalid(format!("domain size must be at least 2, got {d}")));
        }
        let mut opts = self.opts.clone();
        opts.family_seed = derive_seed(seed, 1);
        match &self.sketch {
            None => {
                let d = usize::try_from(d).map_err(|_| invalid("domain too large"))?;
                Ok(Stack::Oracle(oracle_params(self.oracle, eps, d, &opts)?))
            }
            Some(s) => {
                let inner = oracle_params(self.oracle, eps, s.c, &opts)?;
                let mut cfg = SketchConfig::new(s.kind, s.r, s.c, inner, derive_seed(seed, 2))?
                    .with_cohorts(s.cohorts)?;
                if s.kind != SketchKind::Bloom {
                    cfg = cfg.with_combine(s.combine)?;
                }
                if s.injective_rows {
                    if (s.c as u64) < d {
                        return Err(invalid(format!(
                            "injective rows need c >= d (c = {}, d = {d})",
                            s.c
                        )));
                    }
                    cfg = cfg.with_injective_rows()?;
                }
                if s.kind == SketchKind::Bloom && !(s.alpha >= 0.0) {
                    return Err(invalid(format!("ridge penalty must be non-negative, got {}", s.alpha)));
                }
                Ok(Stack::Sketch {
                    cfg,
                    d,
                    alpha: s.alpha,
                    row_post: s.row_post,
                })
            }
        }
    }

    pub fn describe(&self) -> String {
        let inner = match self.oracle {
            OracleKind::Flh => format!("FLH(k'={})", self.opts.k_prime.unwrap_or(0)),
            OracleKind::Hm => match self.opts.t {
                Some(t) => format!("HM(t={t})"),
                None => "HM".to_string(),
            },
            k => k.name().to_string(),
        };
        match &self.sketch {
            None => inner,
            Some(s) => format!("{}+{inner}", s.describe()),
        }
    }
}

/// An instantiated stack.
#[derive(Debug, Clone, PartialEq)]
pub enum Stack {
    Oracle(PureParams),
    Sketch {
        cfg: SketchConfig,
        d: u64,
        alpha: f64,
        row_post: PostMethod,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StackReport {
    Oracle(Report),
    Sketch(SketchReport),
}

impl Stack {
    pub fn domain(&self) -> u64 {
        match self {
            Stack::Oracle(p) => p.domain() as u64,
            Stack::Sketch { d, .. } => *d,
        }
    }

    pub fn eps(&self) -> f64 {
        match self {
            Stack::Oracle(p) => p.eps(),
            Stack::Sketch { cfg, .. } => cfg.inner().eps(),
        }
    }

    pub fn oracle(&self) -> &PureParams {
        match self {
            Stack::Oracle(p) => p,
            Stack::Sketch { cfg, .. } => cfg.inner(),
        }
    }

    pub fn encode(&self, x: u64, rng: &mut Rng) -> Result<StackReport> {
        if x >= self.domain() {
            return Err(crate::error::Error::IndexOutOfRange {
                index: x,
                dim: self.domain(),
            });
        }
        Ok(match self {
            Stack::Oracle(p) => StackReport::Oracle(encode(p, x as usize, rng)?),
            Stack::Sketch { cfg, .. } => StackReport::Sketch(sketch_encode(cfg, x, rng)?),
        })
    }

    pub fn new_state(&self) -> StackState {
        match self {
            Stack::Oracle(p) => StackState::Oracle(AggState::new(p.clone())),
            Stack::Sketch { cfg, .. } => StackState::Sketch(SketchState::new(cfg.clone())),
        }
    }

    /// Decode a finished aggregate.
    pub fn estimator<'a>(&'a self, state: &'a StackState) -> Result<StackEstimator<'a>> {
        Ok(match (self, state) {
            (Stack::Oracle(_), StackState::Oracle(a)) => StackEstimator::Dense(a.estimate_all()),
            (Stack::Sketch { cfg, alpha, .. }, StackState::Sketch(s)) if cfg.kind() == SketchKind::Bloom => {
                StackEstimator::Bloom { state: s, alpha: *alpha }
            }
            (Stack::Sketch { row_post, .. }, StackState::Sketch(s)) => {
                StackEstimator::Sketch(s.finalize_with(*row_post)?)
            }
            _ => return Err(invalid("state does not belong to this stack")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StackState {
    Oracle(AggState),
    Sketch(SketchState),
}

impl StackState {
    pub fn add(&mut self, report: &StackReport) -> Result<()> {
        self.add_weighted(report, 1.0)
    }

    pub fn add_weighted(&mut self, report: &StackReport, w: f64) -> Result<()> {
        match (self, report) {
            (StackState::Oracle(a), StackReport::Oracle(r)) => a.add_weighted(r, w),
            (StackState::Sketch(s), StackReport::Sketch(r)) => s.add_weighted(r, w),
            _ => Err(crate::error::Error::MixedParameters(
                "sketch report fed to a plain oracle or vice versa".into(),
            )),
        }
    }

    pub fn merge(&mut self, other: &StackState) -> Result<()> {
        match (self, other) {
            (StackState::Oracle(a), StackState::Oracle(b)) => a.merge(b),
            (StackState::Sketch(a), StackState::Sketch(b)) => a.merge(b),
            _ => Err(crate::error::Error::MixedParameters("mismatched stack states".into())),
        }
    }

    pub fn n_reports(&self) -> f64 {
        match self {
            StackState::Oracle(a) => a.n_reports(),
            StackState::Sketch(s) => s.n_reports(),
        }
    }
}

/// Answers item queries for a decoded stack.
#[derive(Debug, Clone)]
pub enum StackEstimator<'a> {
    Dense(Vec<f64>),
    Sketch(SketchEstimator),
    Bloom { state: &'a SketchState, alpha: f64 },
}

impl StackEstimator<'_> {
    /// Estimates for `items`. Bloom decodes jointly over exactly this
    /// candidate set.
    pub fn estimate_many(&self, items: &[u64]) -> Result<Vec<f64>> {
        match self {
            StackEstimator::Dense(v) => items
                .iter()
                .map(|&x| {
                    v.get(x as usize).copied().ok_or(crate::error::Error::IndexOutOfRange {
                        index: x,
                        dim: v.len() as u64,
                    })
                })
                .collect(),
            StackEstimator::Sketch(s) => Ok(items.iter().map(|&x| s.estimate(x)).collect()),
            StackEstimator::Bloom { state, alpha } => bloom::decode(state, items, *alpha),
        }
    }

    pub fn estimate_all(&self, d: u64) -> Result<Vec<f64>> {
        match self {
            StackEstimator::Dense(v) => Ok(v.clone()),
            StackEstimator::Sketch(s) => Ok(s.estimate_all(d)),
            StackEstimator::Bloom { .. } => self.estimate_many(&(0..d).collect::<Vec<_>>()),
        }
    }
}

/// Encode `items` with per-user seeds and aggregate them, splitting the work
/// into fixed chunks so the result does not depend on the thread count.
pub fn collect<T, F>(stack_states: F, items: &[T], chunk: usize) -> Result<Vec<StackState>>
where
    T: Sync,
    F: Fn(&[T], usize) -> Result<Vec<StackState>> + Sync,
{
    use rayon::prelude::*;
    let chunk = chunk.max(1);
    let parts: Vec<Vec<StackState>> = items
        .par_chunks(chunk)
        .enumerate()
        .map(|(i, part)| stack_states(part, i * chunk))
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let mut acc = iter.next().unwrap_or_default();
    for part in iter {
        for (a, b) in acc.iter_mut().zip(&part) {
            a.merge(b)?;
        }
    }
    Ok(acc)
}

/// Encode and aggregate `items` through one stack; user `u` draws from
/// `Rng::for_user(seed, u)`.
pub fn run_stack(stack: &Stack, items: &[u64], seed: u64) -> Result<StackState> {
    let states = collect(
        |part, offset| {
            let mut s = stack.new_state();
            for (i, &x) in part.iter().enumerate() {
                let mut rng = Rng::for_user(seed, (offset + i) as u64);
                s.add(&stack.encode(x, &mut rng)?)?;
            }
            Ok(vec![s])
        },
        items,
        CHUNK,
    )?;
    Ok(states.into_iter().next().unwrap_or_else(|| stack.new_state()))
}

pub(crate) const CHUNK: usize = 4096;

/// Test hook for exact-recovery checks: the reports of `x` with the
/// randomness that noiseless parameters leave in place (row choice, Hadamard
/// coefficient sampling) replaced by its exact expectation. Every sketch row
/// gets weight `1/r`, and HM / HR reports are enumerated with their
/// probabilities. Other randomizers are sampled once from `rng`, which for
/// noiseless parameters is deterministic up to decode-invariant choices.
pub fn expected_reports(stack: &Stack, x: u64, rng: &mut Rng) -> Result<Vec<(StackReport, f64)>> {
    if x >= stack.domain() {
        return Err(crate::error::Error::IndexOutOfRange {
            index: x,
            dim: stack.domain(),
        });
    }
    let inner_reports = |p: &PureParams, cell: usize, negate: bool, rng: &mut Rng| -> Result<Vec<(Report, f64)>> {
        if matches!(p.kind(), OracleKind::Hm | OracleKind::Hr) {
            let dist = crate::oracles::enumerate::output_distribution(p, cell)?;
            Ok(dist
                .into_iter()
                .filter(|(_, pr)| *pr > 0.0)
                .map(|(y, pr)| match y {
                    Report::Hm(cs) if negate => (
                        Report::Hm(
                            cs.into_iter()
                                .map(|mut c| {
                                    c.sign = -c.sign;
                                    c
                                })
                                .collect(),
                        ),
                        pr,
                    ),
                    y => (y, pr),
                })
                .collect())
        } else {
            Ok(vec![(crate::oracles::encode_signed(p, cell, negate, rng)?, 1.0)])
        }
    };
    match stack {
        Stack::Oracle(p) => Ok(inner_reports(p, x as usize, false, rng)?
            .into_iter()
            .map(|(y, w)| (StackReport::Oracle(y), w))
            .collect()),
        Stack::Sketch { cfg, .. } => {
            let rows = cfg.hash_count();
            let mut out = Vec::new();
            for row in 0..rows {
                let cell = cfg.cell(row, x);
                let sign = if cfg.kind() == SketchKind::CountSketch {
                    cfg.sign(row, x)
                } else {
                    1
                };
                let negate = sign < 0 && cfg.inner().kind() == OracleKind::Hm;
                for (y, w) in inner_reports(cfg.inner(), cell, negate, rng)? {
                    let rep = SketchReport {
                        row: row as u32,
                        sign,
                        inner: y,
                    };
                    out.push((StackReport::Sketch(rep), w / rows as f64));
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn describe_stacks() {
        let s = StackSpec::oracle(OracleKind::Flh, OracleOptions::default().with_k_prime(500))
            .with_sketch(SketchSpec::count_min(32, 1024, Combine::Median));
        assert_eq!(s.describe(), "CM(median)+FLH(k'=500)");
        assert_eq!(StackSpec::oracle(OracleKind::Olh, OracleOptions::default()).describe(), "OLH");
    }

    #[test]
    fn parallel_run_is_deterministic() {
        let spec = StackSpec::oracle(OracleKind::Oue, OracleOptions::default());
        let stack = spec.build(2.0, 50, 3).unwrap();
        let items: Vec<u64> = (0..20_000).map(|i| (i * 7) % 50).collect();
        let a = run_stack(&stack, &items, 9).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_stack(&stack, &items, 9).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.n_reports(), 20_000.0);
    }

    #[test]
    fn sketch_stack_round_trip() {
        let spec = StackSpec::oracle(OracleKind::Oue, OracleOptions::default().noiseless())
            .with_sketch(SketchSpec {
                injective_rows: true,
                ..SketchSpec::count_min(4, 16, Combine::Mean)
            });
        let stack = spec.build(1.0, 10, 1).unwrap();
        let items: Vec<u64> = vec![3, 3, 3, 9];
        let st = run_stack(&stack, &items, 2).unwrap();
        let all = stack.estimator(&st).unwrap().estimate_all(10).unwrap();
        // MEAN over r-scaled rows sums the per-row counts, so row sampling
        // cancels exactly.
        let mut want = vec![0.0; 10];
        want[3] = 3.0;
        want[9] = 1.0;
        assert_eq!(all, want);
        assert!(spec.build(1.0, 17, 1).is_err());
        assert!(stack.encode(10, &mut Rng::seed_from(0)).is_err());
    }
}
