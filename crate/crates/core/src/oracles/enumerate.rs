//! Exact output distributions of the randomizers at tiny domains.
//!
//! Local hashing is enumerated over the idealized family of *all* functions
//! `[d] -> [g]` (member `i` maps `x` to base-`g` digit `x` of `i`), so the
//! collision rate is exactly `1/g`. [`lh_distribution_over`] instead walks a
//! slice of the real family.

use std::collections::BTreeMap;

use super::{BitVector, HmCoeff, OracleKind, PureParams, Report};
use crate::error::{invalid, Result};
use crate::hadamard;

/// Upper bound on enumerated outputs per input.
pub const MAX_OUTPUTS: usize = 1 << 22;

pub type Distribution = BTreeMap<Report, f64>;

fn ideal_hash(index: u64, x: usize, g: u64) -> u64 {
    index / g.pow(x as u32) % g
}

/// `Pr[R(x) = y]` for every reachable `y`.
pub fn output_distribution(params: &PureParams, x: usize) -> Result<Distribution> {
    let d = params.domain();
    if x >= d {
        return Err(invalid(format!("item {x} outside domain {d}")));
    }
    let p = params.p_star();
    let other = params.p_other();
    let mut out = Distribution::new();
    match params.kind() {
        OracleKind::De => {
            for y in 0..d {
                out.insert(Report::De(y as u32), if y == x { p } else { other });
            }
        }
        OracleKind::Sue | OracleKind::Oue => {
            check_size(1usize.checked_shl(d as u32))?;
            let q = params.q_star();
            for mask in 0u64..1 << d {
                let mut bits = BitVector::zeros(d);
                let mut pr = 1.0;
                for i in 0..d {
                    let one = mask >> i & 1 == 1;
                    bits.set(i, one);
                    let p1 = if i == x { p } else { q };
                    pr *= if one { p1 } else { 1.0 - p1 };
                }
                out.insert(Report::Ue(bits), pr);
            }
        }
        OracleKind::Blh | OracleKind::Olh | OracleKind::Flh => {
            let g = params.g();
            let members = g
                .checked_pow(d as u32)
                .filter(|&m| m <= u32::MAX as u64)
                .ok_or_else(|| invalid("idealized hash family too large to enumerate"))?;
            check_size(members.checked_mul(g).map(|v| v as usize))?;
            let w = 1.0 / members as f64;
            for i in 0..members {
                let h = ideal_hash(i, x, g);
                for v in 0..g {
                    let pr = if v == h { p } else { other };
                    out.insert(
                        Report::Lh {
                            index: i as u32,
                            value: v as u32,
                        },
                        w * pr,
                    );
                }
            }
        }
        OracleKind::Hm => {
            let dim = params.hadamard_dim();
            let t = params.t() as usize;
            let tuples = dim.checked_pow(t as u32);
            check_size(tuples.and_then(|n| n.checked_mul(params.g() as usize)))?;
            let tuples = tuples.expect("checked");
            let w = 1.0 / tuples as f64;
            for code in 0..tuples {
                let idx: Vec<usize> = (0..t).map(|k| code / dim.pow(k as u32) % dim).collect();
                for pattern in 0..params.g() {
                    let coeffs: Vec<HmCoeff> = idx
                        .iter()
                        .enumerate()
                        .map(|(k, &j)| {
                            let s = hadamard::entry(x, j);
                            HmCoeff {
                                index: j as u32,
                                sign: if pattern >> k & 1 == 1 { -s } else { s },
                            }
                        })
                        .collect();
                    let pr = if pattern == 0 { p } else { other };
                    // Repeated indices can make different tuples coincide.
                    *out.entry(Report::Hm(coeffs)).or_insert(0.0) += w * pr;
                }
            }
        }
        OracleKind::Hr => {
            let dim = params.hadamard_dim();
            let half = (dim / 2) as f64;
            for j in 0..dim {
                let pr = if hadamard::entry(x + 1, j) == 1 { p } else { 1.0 - p };
                out.insert(Report::Hr(j as u32), pr / half);
            }
        }
    }
    Ok(out)
}

/// LH only: the distribution restricted to real family members
/// `indices`, each equally likely.
pub fn lh_distribution_over(
    params: &PureParams,
    x: usize,
    indices: std::ops::Range<u32>,
) -> Result<Distribution> {
    if !params.kind().is_local_hashing() {
        return Err(invalid(format!("{} is not a local-hashing oracle", params.kind())));
    }
    if indices.is_empty() {
        return Err(invalid("empty index range"));
    }
    let w = 1.0 / indices.len() as f64;
    let mut out = Distribution::new();
    for i in indices {
        let h = params.family().hash(i as u64, x as u64);
        for v in 0..params.g() {
            let pr = if v == h { params.p_star() } else { params.p_other() };
            out.insert(
                Report::Lh {
                    index: i,
                    value: v as u32,
                },
                w * pr,
            );
        }
    }
    Ok(out)
}

fn check_size(n: Option<usize>) -> Result<()> {
    match n {
        Some(n) if n <= MAX_OUTPUTS => Ok(()),
        _ => Err(invalid(format!("output space exceeds {MAX_OUTPUTS} reports"))),
    }
}

/// Whether `report` supports item `x`. LH reports are read against the
/// idealized family used by [`output_distribution`].
pub fn supports(params: &PureParams, report: &Report, x: usize) -> bool {
    match report {
        Report::De(v) => *v as usize == x,
        Report::Ue(bits) => bits.get(x),
        Report::Lh { index, value } => ideal_hash(*index as u64, x, params.g()) == *value as u64,
        Report::Hm(cs) => cs
            .iter()
            .all(|c| c.sign == hadamard::entry(x, c.index as usize)),
        Report::Hr(j) => hadamard::entry(x + 1, *j as usize) == 1,
    }
}

/// `Pr[R(x) supports x']`.
pub fn support_probability(params: &PureParams, x: usize, x_prime: usize) -> Result<f64> {
    Ok(output_distribution(params, x)?
        .iter()
        .filter(|(y, _)| supports(params, y, x_prime))
        .map(|(_, &p)| p)
        .sum())
}

/// `max over x, x', y of Pr[R(x) = y] / Pr[R(x') = y]`.
///
/// Infinite if some output is reachable from one input but not another.
pub fn max_ratio_of(dists: &[Distribution]) -> f64 {
    let mut all: BTreeMap<&Report, (f64, f64)> = BTreeMap::new();
    for dist in dists {
        for (y, &p) in dist {
            let e = all.entry(y).or_insert((f64::INFINITY, 0.0));
            e.0 = e.0.min(p);
            e.1 = e.1.max(p);
        }
    }
    let mut worst: f64 = 1.0;
    for (y, (lo, hi)) in all {
        let reached_by_all = dists.iter().all(|d| d.contains_key(y));
        if !reached_by_all || lo == 0.0 {
            if hi > 0.0 {
                return f64::INFINITY;
            }
            continue;
        }
        worst = worst.max(hi / lo);
    }
    worst
}

pub fn max_privacy_ratio(params: &PureParams) -> Result<f64> {
    let dists = (0..params.domain())
        .map(|x| output_distribution(params, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(max_ratio_of(&dists))
}
