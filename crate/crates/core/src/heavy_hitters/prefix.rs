//! Prefix extension: PEM and TreeHistogram.
//!
//! Both keep the top `T` prefixes of one length and only query their
//! extensions at the next length, since no extension of a light prefix can
//! be heavy.

use serde::{Deserialize, Serialize};

use super::{finish, top_t, HHConfig, HHResult, HeavyHitterProtocol, PhaseInfo, Routed, TraceRow, MAX_ENUMERATED};
use crate::error::{invalid, Result};
use crate::hashing::{derive_seed, Rng};
use crate::stack::{expected_reports, Stack, StackEstimator, StackReport, StackState};

/// What a PEM user sends: the prefix length group in the clear and the
/// privatized prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PemReport {
    pub group: u32,
    pub report: StackReport,
}

/// What a TreeHistogram user sends: the whole word and one prefix, each at
/// a share of the budget. `group` indexes the prefix length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThReport {
    pub group: u32,
    pub prefix: StackReport,
    pub word: StackReport,
}

/// Run the extension phases. `score(i, candidates)` estimates candidates of
/// length `lengths[i]`. Returns every scored candidate of the last phase.
fn extend<F>(cfg: &HHConfig, lengths: &[usize], mut score: F, out: &mut HHResult) -> Result<Vec<(u64, f64)>>
where
    F: FnMut(usize, &[u64]) -> Result<Vec<f64>>,
{
    let mut kept: Vec<(u64, f64)> = Vec::new();
    let mut scored = Vec::new();
    for (i, &len) in lengths.iter().enumerate() {
        let candidates: Vec<u64> = if i == 0 {
            let d = cfg.domain(len);
            if d > MAX_ENUMERATED {
                return Err(invalid(format!("first phase has {d} prefixes, too many to enumerate")));
            }
            (0..d).collect()
        } else {
            let fan = cfg.domain(len - lengths[i - 1]);
            kept.iter()
                .flat_map(|&(k, _)| (0..fan).map(move |e| k * fan + e))
                .collect()
        };
        let est = score(i, &candidates)?;
        out.phases.push(PhaseInfo {
            phase: out.phases.len(),
            length: len,
            candidates: candidates.len(),
        });
        scored = candidates.into_iter().zip(est).collect();
        if cfg.trace {
            let phase = out.phases.len() - 1;
            out.trace.extend(scored.iter().map(|&(c, e)| TraceRow {
                phase,
                candidate: cfg.render(c, len),
                estimate: e,
            }));
        }
        kept = top_t(scored.clone(), cfg.top_t);
    }
    Ok(scored)
}

fn estimators<'a>(stacks: &'a [Stack], states: &'a [StackState]) -> Result<Vec<StackEstimator<'a>>> {
    if stacks.len() != states.len() {
        return Err(invalid(format!("expected {} aggregates, got {}", stacks.len(), states.len())));
    }
    stacks.iter().zip(states).map(|(s, st)| s.estimator(st)).collect()
}

/// Reports for `x` through `stack` at weight `w`, sampled or in expectation.
fn reports_for(stack: &Stack, x: u64, rng: &mut Rng, expected: bool, w: f64) -> Result<Vec<(StackReport, f64)>> {
    if expected {
        Ok(expected_reports(stack, x, rng)?
            .into_iter()
            .map(|(r, p)| (r, p * w))
            .collect())
    } else {
        Ok(vec![(stack.encode(x, rng)?, w)])
    }
}

pub struct Pem {
    cfg: HHConfig,
    lengths: Vec<usize>,
    stacks: Vec<Stack>,
}

impl Pem {
    pub fn new(cfg: HHConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let lengths = cfg.prefix_lengths();
        let stacks = lengths
            .iter()
            .enumerate()
            .map(|(g, &len)| cfg.phase_stack(cfg.eps, cfg.domain(len), derive_seed(seed, g as u64)))
            .collect::<Result<_>>()?;
        Ok(Self { cfg, lengths, stacks })
    }

    /// Prefix length of each group.
    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn client(&self, x: &str, rng: &mut Rng) -> Result<PemReport> {
        let symbols = self.cfg.symbols(x)?;
        let group = rng.below(self.lengths.len() as u64) as usize;
        let code = self.cfg.code(&symbols[..self.lengths[group]]);
        Ok(PemReport {
            group: group as u32,
            report: self.stacks[group].encode(code, rng)?,
        })
    }
}

impl HeavyHitterProtocol for Pem {
    fn config(&self) -> &HHConfig {
        &self.cfg
    }

    fn stacks(&self) -> Vec<&Stack> {
        self.stacks.iter().collect()
    }

    fn route(&self, symbols: &[u32], rng: &mut Rng, expected: bool) -> Result<Vec<Routed>> {
        let groups = self.lengths.len();
        let chosen: Vec<usize> = if expected {
            (0..groups).collect()
        } else {
            vec![rng.below(groups as u64) as usize]
        };
        let w = if expected { 1.0 / groups as f64 } else { 1.0 };
        let mut out = Vec::new();
        for g in chosen {
            let code = self.cfg.code(&symbols[..self.lengths[g]]);
            for (r, w) in reports_for(&self.stacks[g], code, rng, expected, w)? {
                out.push((g, r, w));
            }
        }
        Ok(out)
    }

    fn decode(&self, states: &[StackState]) -> Result<HHResult> {
        let ests = estimators(&self.stacks, states)?;
        // Each group saw about 1/G of the users.
        let scale = self.lengths.len() as f64;
        let mut out = HHResult::default();
        let last = extend(
            &self.cfg,
            &self.lengths,
            |i, cands| Ok(ests[i].estimate_many(cands)?.into_iter().map(|v| v * scale).collect()),
            &mut out,
        )?;
        out.discovered = finish(&self.cfg, last, self.cfg.max_len);
        Ok(out)
    }
}

pub struct TreeHistogram {
    cfg: HHConfig,
    /// Prefix lengths shorter than `L`.
    lengths: Vec<usize>,
    /// Word oracle first, then one per prefix length.
    stacks: Vec<Stack>,
}

impl TreeHistogram {
    pub fn new(cfg: HHConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut lengths = cfg.prefix_lengths();
        lengths.pop();
        if lengths.is_empty() {
            return Err(invalid("TreeHistogram needs a prefix length shorter than L"));
        }
        let word_eps = cfg.eps * cfg.budget_split;
        let prefix_eps = cfg.eps - word_eps;
        let mut stacks = vec![cfg.phase_stack(word_eps, cfg.domain(cfg.max_len), derive_seed(seed, 0))?];
        for (g, &len) in lengths.iter().enumerate() {
            stacks.push(cfg.phase_stack(prefix_eps, cfg.domain(len), derive_seed(seed, g as u64 + 1))?);
        }
        Ok(Self { cfg, lengths, stacks })
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn word_stack(&self) -> &Stack {
        &self.stacks[0]
    }

    pub fn prefix_stack(&self, group: usize) -> &Stack {
        &self.stacks[group + 1]
    }

    pub fn client(&self, x: &str, rng: &mut Rng) -> Result<ThReport> {
        let symbols = self.cfg.symbols(x)?;
        let word = self.stacks[0].encode(self.cfg.code(&symbols), rng)?;
        let group = rng.below(self.lengths.len() as u64) as usize;
        let code = self.cfg.code(&symbols[..self.lengths[group]]);
        Ok(ThReport {
            group: group as u32,
            prefix: self.stacks[group + 1].encode(code, rng)?,
            word,
        })
    }
}

impl HeavyHitterProtocol for TreeHistogram {
    fn config(&self) -> &HHConfig {
        &self.cfg
    }

    fn stacks(&self) -> Vec<&Stack> {
        self.stacks.iter().collect()
    }

    fn route(&self, symbols: &[u32], rng: &mut Rng, expected: bool) -> Result<Vec<Routed>> {
        let mut out: Vec<Routed> = reports_for(&self.stacks[0], self.cfg.code(symbols), rng, expected, 1.0)?
            .into_iter()
            .map(|(r, w)| (0, r, w))
            .collect();
        let groups = self.lengths.len();
        let chosen: Vec<usize> = if expected {
            (0..groups).collect()
        } else {
            vec![rng.below(groups as u64) as usize]
        };
        let w = if expected { 1.0 / groups as f64 } else { 1.0 };
        for g in chosen {
            let code = self.cfg.code(&symbols[..self.lengths[g]]);
            for (r, w) in reports_for(&self.stacks[g + 1], code, rng, expected, w)? {
                out.push((g + 1, r, w));
            }
        }
        Ok(out)
    }

    fn decode(&self, states: &[StackState]) -> Result<HHResult> {
        let ests = estimators(&self.stacks, states)?;
        let scale = self.lengths.len() as f64;
        let mut out = HHResult::default();
        // The prefix phases, then one last extension to full length scored
        // by the word oracle.
        let mut lengths = self.lengths.clone();
        lengths.push(self.cfg.max_len);
        let word_phase = lengths.len() - 1;
        let last = extend(
            &self.cfg,
            &lengths,
            |i, cands| {
                if i == word_phase {
                    ests[0].estimate_many(cands)
                } else {
                    Ok(ests[i + 1].estimate_many(cands)?.into_iter().map(|v| v * scale).collect())
                }
            },
            &mut out,
        )?;
        out.discovered = finish(&self.cfg, last, self.cfg.max_len);
        Ok(out)
    }
}
