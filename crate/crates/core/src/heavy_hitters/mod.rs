//! Heavy-hitter discovery over strings: the sequence fragment puzzle
//! ([`Sfp`]), the prefix extending method ([`Pem`]) and TreeHistogram
//! ([`TreeHistogram`]).
//!
//! Strings are padded to `L` with a reserved pad symbol appended to the
//! alphabet, so the effective base is `B = |alphabet| + 1`. A string (or a
//! prefix of it) is identified with its base-`B` big-endian code, which
//! makes numeric order coincide with lexicographic order. The pad is digit 0
//! and the alphabet occupies `1..B`, so a short word sorts before its
//! extensions.

mod prefix;
mod sfp;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use prefix::{Pem, PemReport, ThReport, TreeHistogram};
pub use sfp::{Sfp, SfpReport};

use crate::error::{invalid, Error, Result};
use crate::hashing::{derive_seed, Rng};
use crate::stack::{self, SketchSpec, Stack, StackReport, StackSpec, StackState};

/// Phase domains above this size get the default sketch when the stack
/// does not name one.
pub const AUTO_SKETCH_ABOVE: u64 = 1 << 16;

/// Largest phase the decoders will enumerate exhaustively.
pub const MAX_ENUMERATED: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Sfp,
    Pem,
    Th,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Sfp => "SFP",
            Protocol::Pem => "PEM",
            Protocol::Th => "TH",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sfp" => Ok(Protocol::Sfp),
            "pem" => Ok(Protocol::Pem),
            "th" | "treehistogram" => Ok(Protocol::Th),
            _ => Err(invalid(format!("unknown protocol {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HHConfig {
    pub alphabet: Vec<char>,
    /// `L`: strings are truncated / padded to this length.
    pub max_len: usize,
    pub fragment_len: usize,
    pub hash_bits: u32,
    pub prefix_step: usize,
    pub start_len: usize,
    /// `T`: candidates kept per phase and results returned.
    pub top_t: usize,
    pub eps: f64,
    /// Share of `eps` spent on the whole-word oracle (SFP, TH).
    pub budget_split: f64,
    pub stack: StackSpec,
    /// Used for phases above [`AUTO_SKETCH_ABOVE`] when `stack` has no
    /// sketch.
    pub auto_sketch: SketchSpec,
    /// Record every scored candidate in [`HHResult::trace`].
    pub trace: bool,
}

impl HHConfig {
    pub fn new(eps: f64, stack: StackSpec) -> Self {
        Self {
            alphabet: ('a'..='z').collect(),
            max_len: 6,
            fragment_len: 2,
            hash_bits: 8,
            prefix_step: 2,
            start_len: 2,
            top_t: 10,
            eps,
            budget_split: 0.5,
            stack,
            auto_sketch: SketchSpec::count_min(32, 1024, crate::sketch::Combine::Mean),
            trace: false,
        }
    }

    pub fn base(&self) -> u64 {
        self.alphabet.len() as u64 + 1
    }

    pub fn pad(&self) -> u32 {
        0
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet.is_empty() {
            return Err(invalid("empty alphabet"));
        }
        let mut sorted = self.alphabet.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.alphabet.len() {
            return Err(invalid("alphabet has repeated characters"));
        }
        if self.max_len == 0 || self.start_len == 0 || self.prefix_step == 0 || self.fragment_len == 0 {
            return Err(invalid("lengths must be positive"));
        }
        if self.start_len > self.max_len {
            return Err(invalid(format!(
                "start length {} exceeds L = {}",
                self.start_len, self.max_len
            )));
        }
        if self.top_t == 0 {
            return Err(invalid("T must be at least 1"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.budget_split > 0.0 && self.budget_split < 1.0) {
            return Err(invalid(format!("budget split must lie in (0, 1), got {}", self.budget_split)));
        }
        if self.hash_bits == 0 || self.hash_bits > 24 {
            return Err(invalid(format!("hash bits must lie in [1, 24], got {}", self.hash_bits)));
        }
        self.base()
            .checked_pow(self.max_len as u32)
            .filter(|&v| v <= u32::MAX as u64)
            .ok_or_else(|| invalid("alphabet^L exceeds 2^32 items"))?;
        Ok(())
    }

    /// Symbols of `x`, truncated and padded to `L`.
    pub fn symbols(&self, x: &str) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(self.max_len);
        for ch in x.chars().take(self.max_len) {
            let i = self
                .alphabet
                .iter()
                .position(|&a| a == ch)
                .ok_or(Error::OutsideAlphabet(ch))?;
            out.push(i as u32 + 1);
        }
        out.resize(self.max_len, self.pad());
        Ok(out)
    }

    /// Number of codes of length `len`, pads included.
    pub fn domain(&self, len: usize) -> u64 {
        self.base().pow(len as u32)
    }

    /// `start, start + step, ...`, ending at `L` even when the step
    /// overshoots.
    pub fn prefix_lengths(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (self.start_len..=self.max_len).step_by(self.prefix_step).collect();
        if v.last() != Some(&self.max_len) {
            v.push(self.max_len);
        }
        v
    }

    pub fn code(&self, symbols: &[u32]) -> u64 {
        symbols.iter().fold(0u64, |acc, &s| acc * self.base() + s as u64)
    }

    fn digits(&self, mut code: u64, len: usize) -> Vec<u32> {
        let mut out = vec![0u32; len];
        for slot in out.iter_mut().rev() {
            *slot = (code % self.base()) as u32;
            code /= self.base();
        }
        out
    }

    /// A string of length `len` from its code, or `None` if a pad precedes
    /// a real symbol or the string is all padding.
    pub fn decode(&self, code: u64, len: usize) -> Option<String> {
        let digits = self.digits(code, len);
        let real = digits.iter().take_while(|&&d| d != self.pad()).count();
        if real == 0 || digits[real..].iter().any(|&d| d != self.pad()) {
            return None;
        }
        Some(digits[..real].iter().map(|&d| self.alphabet[d as usize - 1]).collect())
    }

    /// Human-readable form including pads, for traces.
    pub fn render(&self, code: u64, len: usize) -> String {
        self.digits(code, len)
            .into_iter()
            .map(|d| match d {
                0 => '\u{b7}',
                d => self.alphabet[d as usize - 1],
            })
            .collect()
    }

    /// The configured stack, or the default sketch above
    /// [`AUTO_SKETCH_ABOVE`], for a phase over `d` items at budget `eps`.
    pub fn phase_stack(&self, eps: f64, d: u64, seed: u64) -> Result<Stack> {
        let mut spec = self.stack.clone();
        if spec.sketch.is_none() && d > AUTO_SKETCH_ABOVE {
            spec.sketch = Some(self.auto_sketch.clone());
        }
        spec.build(eps, d, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseInfo {
    pub phase: usize,
    /// Prefix (or fragment) length scored in this phase.
    pub length: usize,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub phase: usize,
    pub candidate: String,
    pub estimate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HHResult {
    /// Sorted by estimate, descending; ties lexicographic.
    pub discovered: Vec<(String, f64)>,
    pub phases: Vec<PhaseInfo>,
    pub trace: Vec<TraceRow>,
}

impl HHResult {
    pub fn strings(&self) -> Vec<&str> {
        self.discovered.iter().map(|(s, _)| s.as_str()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "string", "estimate"])?;
        for (i, (s, e)) in self.discovered.iter().enumerate() {
            w.write_record([(i + 1).to_string(), s.clone(), format!("{e:.6}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["phase", "candidate", "estimate"])?;
        for r in &self.trace {
            w.write_record([r.phase.to_string(), r.candidate.clone(), format!("{:.6}", r.estimate)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Top `t` of `(code, estimate)` pairs; ties go to the smaller code.
pub(crate) fn top_t(mut scored: Vec<(u64, f64)>, t: usize) -> Vec<(u64, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(t);
    scored
}

/// Sort final results, dropping impossible strings and non-positive
/// estimates.
pub(crate) fn finish(cfg: &HHConfig, scored: Vec<(u64, f64)>, len: usize) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = scored
        .into_iter()
        .filter(|&(_, e)| e > 0.0)
        .filter_map(|(code, e)| cfg.decode(code, len).map(|s| (s, e)))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out.truncate(cfg.top_t);
    out
}

/// A weighted message for one of a protocol's server aggregates.
pub type Routed = (usize, StackReport, f64);

/// Common shape of the three protocols, used by [`run_protocol`].
pub trait HeavyHitterProtocol: Sync {
    fn config(&self) -> &HHConfig;

    /// Every server-side aggregate, in routing order.
    fn stacks(&self) -> Vec<&Stack>;

    /// One user's messages. With `expected`, the user's uniform choices
    /// (position, group) are replaced by all options at equal weight and
    /// the stack randomness by [`stack::expected_reports`].
    fn route(&self, symbols: &[u32], rng: &mut Rng, expected: bool) -> Result<Vec<Routed>>;

    fn decode(&self, states: &[StackState]) -> Result<HHResult>;
}

/// Build the protocol's stacks from `seed`.
pub fn build_protocol(protocol: Protocol, cfg: &HHConfig, seed: u64) -> Result<Box<dyn HeavyHitterProtocol>> {
    Ok(match protocol {
        Protocol::Sfp => Box::new(Sfp::new(cfg.clone(), seed)?),
        Protocol::Pem => Box::new(Pem::new(cfg.clone(), seed)?),
        Protocol::Th => Box::new(TreeHistogram::new(cfg.clone(), seed)?),
    })
}

/// Run every client and decode. User `u` draws from
/// `Rng::for_user(derive_seed(seed, 1), u)`; stacks come from
/// `derive_seed(seed, 0)`.
pub fn run_protocol(protocol: Protocol, cfg: &HHConfig, strings: &[String], seed: u64) -> Result<HHResult> {
    run_with(protocol, cfg, strings, seed, false)
}

/// Test hook: as [`run_protocol`] with every user's randomness replaced by
/// its expectation (see [`HeavyHitterProtocol::route`]).
pub fn run_protocol_expected(protocol: Protocol, cfg: &HHConfig, strings: &[String], seed: u64) -> Result<HHResult> {
    run_with(protocol, cfg, strings, seed, true)
}

fn run_with(protocol: Protocol, cfg: &HHConfig, strings: &[String], seed: u64, expected: bool) -> Result<HHResult> {
    let proto = build_protocol(protocol, cfg, derive_seed(seed, 0))?;
    let states = aggregate_clients(proto.as_ref(), strings, derive_seed(seed, 1), expected)?;
    proto.decode(&states)
}

pub fn aggregate_clients(
    proto: &dyn HeavyHitterProtocol,
    strings: &[String],
    user_seed: u64,
    expected: bool,
) -> Result<Vec<StackState>> {
    let fresh = || proto.stacks().iter().map(|s| s.new_state()).collect::<Vec<_>>();
    let states = stack::collect(
        |part: &[String], offset| {
            let mut states = fresh();
            for (i, x) in part.iter().enumerate() {
                let symbols = proto.config().symbols(x)?;
                let mut rng = Rng::for_user(user_seed, (offset + i) as u64);
                for (slot, rep, w) in proto.route(&symbols, &mut rng, expected)? {
                    states[slot].add_weighted(&rep, w)?;
                }
            }
            Ok(states)
        },
        strings,
        stack::CHUNK,
    )?;
    Ok(if states.is_empty() { fresh() } else { states })
}

/// Exact top-`t` of a population, ties lexicographic. Strings are cut to `L`
/// first.
pub fn true_top(strings: &[String], max_len: usize, t: usize) -> Vec<(String, u64)> {
    let mut hist = std::collections::BTreeMap::<String, u64>::new();
    for s in strings {
        *hist.entry(s.chars().take(max_len).collect()).or_insert(0) += 1;
    }
    let mut v: Vec<(String, u64)> = hist.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(t);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{OracleKind, OracleOptions};

    fn cfg() -> HHConfig {
        HHConfig::new(3.0, StackSpec::oracle(OracleKind::Oue, OracleOptions::default()))
    }

    #[test]
    fn string_codes() {
        let c = cfg();
        let s = c.symbols("google").unwrap();
        assert_eq!(c.decode(c.code(&s), 6).unwrap(), "google");
        let short = c.symbols("ab").unwrap();
        assert_eq!(short, vec![1, 2, 0, 0, 0, 0]);
        assert_eq!(c.decode(c.code(&short), 6).unwrap(), "ab");
        assert_eq!(c.decode(c.code(&short[..4]), 4).unwrap(), "ab");
        assert_eq!(c.symbols("googleplex").unwrap().len(), 6);
        assert!(matches!(c.symbols("a-b"), Err(Error::OutsideAlphabet('-'))));
        // interior pad and all-pad codes are not strings
        assert!(c.decode(c.code(&[1, 0, 2]), 3).is_none());
        assert!(c.decode(c.code(&[0, 0]), 2).is_none());
        assert_eq!(c.render(c.code(&[1, 0]), 2), "a\u{b7}");
    }

    #[test]
    fn code_order_is_lexicographic() {
        let c = cfg();
        let words = ["a", "aa", "ab", "b", "ba", "zz"];
        let codes: Vec<u64> = words.iter().map(|w| c.code(&c.symbols(w).unwrap())).collect();
        assert!(codes.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        assert!(c.validate().is_ok());
        c.start_len = 7;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.alphabet = vec!['a', 'a'];
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.max_len = 8;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.top_t = 0;
        assert!(c.validate().is_err());
        assert_eq!("pem".parse::<Protocol>().unwrap(), Protocol::Pem);
    }

    #[test]
    fn prefix_lengths() {
        let mut c = cfg();
        assert_eq!(c.prefix_lengths(), vec![2, 4, 6]);
        c.prefix_step = 3;
        assert_eq!(c.prefix_lengths(), vec![2, 5, 6]);
        c.start_len = 6;
        assert_eq!(c.prefix_lengths(), vec![6]);
    }

    #[test]
    fn top_t_ties() {
        let v = top_t(vec![(5, 1.0), (3, 2.0), (4, 2.0), (1, 0.5)], 2);
        assert_eq!(v, vec![(3, 2.0), (4, 2.0)]);
    }

    #[test]
    fn brute_force_top() {
        let pop: Vec<String> = ["b", "a", "a", "c", "b", "d"].iter().map(|s| s.to_string()).collect();
        let top = true_top(&pop, 6, 3);
        assert_eq!(top, vec![("a".into(), 2), ("b".into(), 2), ("c".into(), 1)]);
    }
}
