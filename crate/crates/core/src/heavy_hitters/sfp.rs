//! Sequence fragment puzzle.
//!
//! A user pads the word to `L`, picks one of the `L / fragment_len` aligned
//! fragment positions, and reports that fragment tagged with a short hash of
//! the whole word, plus the whole word through a second oracle. The server
//! finds popular (fragment, tag) pairs at every position, glues fragments
//! with equal tags together, and checks the glued words against the word
//! oracle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{finish, top_t, HHConfig, HHResult, HeavyHitterProtocol, PhaseInfo, Routed, TraceRow, MAX_ENUMERATED};
use crate::error::{invalid, Result};
use crate::hashing::{derive_seed, HashFamily, Rng};
use crate::stack::{expected_reports, Stack, StackReport, StackState};

const TAG_SALT: u64 = 0x7A65_5EED;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfpReport {
    /// Fragment position, sent in the clear.
    pub position: u32,
    /// Privatized `fragment * 2^hash_bits + tag`.
    pub fragment: StackReport,
    pub word: StackReport,
}

pub struct Sfp {
    cfg: HHConfig,
    tags: HashFamily,
    /// One per fragment position, then the word oracle.
    stacks: Vec<Stack>,
}

impl Sfp {
    pub fn new(cfg: HHConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.max_len % cfg.fragment_len != 0 {
            return Err(invalid(format!(
                "L = {} is not a multiple of the fragment length {}",
                cfg.max_len, cfg.fragment_len
            )));
        }
        let tag_range = 1u64 << cfg.hash_bits;
        let tag_seed = derive_seed(seed, TAG_SALT);
        let tags = if cfg.stack.opts.injective_hash {
            HashFamily::injective(tag_seed, tag_range)?
        } else {
            HashFamily::new(tag_seed, tag_range)?
        };
        let word_eps = cfg.eps * cfg.budget_split;
        let frag_eps = cfg.eps - word_eps;
        let positions = cfg.max_len / cfg.fragment_len;
        let frag_domain = cfg.domain(cfg.fragment_len) * tag_range;
        let mut stacks = Vec::with_capacity(positions + 1);
        for p in 0..positions {
            stacks.push(cfg.phase_stack(frag_eps, frag_domain, derive_seed(seed, p as u64))?);
        }
        stacks.push(cfg.phase_stack(word_eps, cfg.domain(cfg.max_len), derive_seed(seed, positions as u64))?);
        Ok(Self { cfg, tags, stacks })
    }

    pub fn positions(&self) -> usize {
        self.stacks.len() - 1
    }

    pub fn fragment_stack(&self, position: usize) -> &Stack {
        &self.stacks[position]
    }

    pub fn word_stack(&self) -> &Stack {
        &self.stacks[self.positions()]
    }

    /// Tag of a padded word code.
    pub fn tag(&self, word: u64) -> u64 {
        self.tags.hash(0, word)
    }

    /// The fragment item at `position`: `(fragment code, tag)` packed.
    pub fn fragment_item(&self, symbols: &[u32], position: usize) -> u64 {
        let fl = self.cfg.fragment_len;
        let frag = self.cfg.code(&symbols[position * fl..(position + 1) * fl]);
        (frag << self.cfg.hash_bits) | self.tag(self.cfg.code(symbols))
    }

    pub fn client(&self, x: &str, rng: &mut Rng) -> Result<SfpReport> {
        let symbols = self.cfg.symbols(x)?;
        let position = rng.below(self.positions() as u64) as usize;
        let fragment = self.stacks[position].encode(self.fragment_item(&symbols, position), rng)?;
        let word = self.word_stack().encode(self.cfg.code(&symbols), rng)?;
        Ok(SfpReport {
            position: position as u32,
            fragment,
            word,
        })
    }

    fn render_fragment(&self, item: u64) -> String {
        let tag = item & ((1 << self.cfg.hash_bits) - 1);
        format!("{}#{tag}", self.cfg.render(item >> self.cfg.hash_bits, self.cfg.fragment_len))
    }
}

impl HeavyHitterProtocol for Sfp {
    fn config(&self) -> &HHConfig {
        &self.cfg
    }

    fn stacks(&self) -> Vec<&Stack> {
        self.stacks.iter().collect()
    }

    fn route(&self, symbols: &[u32], rng: &mut Rng, expected: bool) -> Result<Vec<Routed>> {
        let positions = self.positions();
        let word_slot = positions;
        let word = self.cfg.code(symbols);
        let mut out = Vec::new();
        if expected {
            let w = 1.0 / positions as f64;
            for p in 0..positions {
                for (r, pr) in expected_reports(&self.stacks[p], self.fragment_item(symbols, p), rng)? {
                    out.push((p, r, pr * w));
                }
            }
            for (r, pr) in expected_reports(&self.stacks[word_slot], word, rng)? {
                out.push((word_slot, r, pr));
            }
        } else {
            let p = rng.below(positions as u64) as usize;
            out.push((p, self.stacks[p].encode(self.fragment_item(symbols, p), rng)?, 1.0));
            out.push((word_slot, self.stacks[word_slot].encode(word, rng)?, 1.0));
        }
        Ok(out)
    }

    fn decode(&self, states: &[StackState]) -> Result<HHResult> {
        if states.len() != self.stacks.len() {
            return Err(invalid(format!("expected {} aggregates, got {}", self.stacks.len(), states.len())));
        }
        let cfg = &self.cfg;
        let positions = self.positions();
        let frag_domain = cfg.domain(cfg.fragment_len) << cfg.hash_bits;
        if frag_domain > MAX_ENUMERATED {
            return Err(invalid(format!("{frag_domain} fragment items are too many to enumerate")));
        }
        let scale = positions as f64;
        let mut out = HHResult::default();
        // Per position: tag -> best fragment.
        let mut pieces: Vec<BTreeMap<u64, u64>> = Vec::with_capacity(positions);
        for p in 0..positions {
            let est = self.stacks[p].estimator(&states[p])?.estimate_all(frag_domain)?;
            let scored: Vec<(u64, f64)> = est.into_iter().enumerate().map(|(i, v)| (i as u64, v * scale)).collect();
            let kept = top_t(scored, cfg.top_t);
            out.phases.push(PhaseInfo {
                phase: p,
                length: cfg.fragment_len,
                candidates: frag_domain as usize,
            });
            if cfg.trace {
                out.trace.extend(kept.iter().map(|&(item, e)| TraceRow {
                    phase: p,
                    candidate: self.render_fragment(item),
                    estimate: e,
                }));
            }
            let mut best = BTreeMap::new();
            let mask = (1u64 << cfg.hash_bits) - 1;
            // `kept` is sorted best first, so the first fragment per tag wins.
            for (item, _) in kept {
                best.entry(item & mask).or_insert(item >> cfg.hash_bits);
            }
            pieces.push(best);
        }
        let step = cfg.domain(cfg.fragment_len);
        let candidates: Vec<u64> = pieces[0]
            .keys()
            .filter(|tag| pieces.iter().all(|m| m.contains_key(tag)))
            .map(|tag| pieces.iter().fold(0u64, |acc, m| acc * step + m[tag]))
            .collect();
        out.phases.push(PhaseInfo {
            phase: positions,
            length: cfg.max_len,
            candidates: candidates.len(),
        });
        if candidates.is_empty() {
            return Ok(out);
        }
        let word_est = self.stacks[positions]
            .estimator(&states[positions])?
            .estimate_many(&candidates)?;
        let verified: Vec<(u64, f64)> = candidates.into_iter().zip(word_est).filter(|&(_, e)| e > 0.0).collect();
        if cfg.trace {
            out.trace.extend(verified.iter().map(|&(c, e)| TraceRow {
                phase: positions,
                candidate: cfg.render(c, cfg.max_len),
                estimate: e,
            }));
        }
        out.discovered = finish(cfg, verified, cfg.max_len);
        Ok(out)
    }
}
