use super::{BitVector, HmCoeff, OracleKind, PureParams, Report};
use crate::error::{Error, Result};
use crate::hadamard;
use crate::hashing::Rng;

/// Privatize item `x`.
pub fn encode(params: &PureParams, x: usize, rng: &mut Rng) -> Result<Report> {
    encode_signed(params, x, false, rng)
}

/// HM only: encode `-e^(x)` instead of `e^(x)`, which lets a Count sketch
/// carry its ±1 weight inside the report.
pub(crate) fn encode_signed(
    params: &PureParams,
    x: usize,
    negate: bool,
    rng: &mut Rng,
) -> Result<Report> {
    let d = params.domain();
    if x >= d {
        return Err(Error::IndexOutOfRange {
            index: x as u64,
            dim: d as u64,
        });
    }
    debug_assert!(!negate || params.kind() == OracleKind::Hm);
    Ok(match params.kind() {
        OracleKind::De => Report::De(direct(x as u64, d as u64, params.p_star(), rng) as u32),
        OracleKind::Sue | OracleKind::Oue => Report::Ue(unary(params, x, rng)),
        OracleKind::Blh | OracleKind::Olh | OracleKind::Flh => {
            let index = if params.kind() == OracleKind::Flh {
                rng.below(params.k_prime())
            } else {
                rng.below(1 << 32)
            };
            let h = params.family().hash(index, x as u64);
            let value = direct(h, params.g(), params.p_star(), rng);
            Report::Lh {
                index: index as u32,
                value: value as u32,
            }
        }
        OracleKind::Hm => Report::Hm(hadamard_mechanism(params, x, negate, rng)),
        OracleKind::Hr => Report::Hr(hadamard_response(params, x, rng) as u32),
    })
}

/// Keep `v` with probability `p`, else a uniform other symbol of `[g]`.
#[inline]
fn direct(v: u64, g: u64, p: f64, rng: &mut Rng) -> u64 {
    if rng.bernoulli(p) {
        v
    } else {
        let y = rng.below(g - 1);
        if y >= v {
            y + 1
        } else {
            y
        }
    }
}

fn unary(params: &PureParams, x: usize, rng: &mut Rng) -> BitVector {
    let d = params.domain();
    let mut bits = BitVector::zeros(d);
    // Zeros flip independently with probability q; walk the gaps between
    // flipped positions instead of drawing d Bernoullis.
    let q = params.q_star();
    if q > 0.0 {
        let mut pos = rng.geometric(q);
        while pos < d as u64 {
            bits.set(pos as usize, true);
            pos = pos.saturating_add(1).saturating_add(rng.geometric(q));
        }
    }
    bits.set(x, rng.bernoulli(params.p_star()));
    bits
}

fn hadamard_mechanism(params: &PureParams, x: usize, negate: bool, rng: &mut Rng) -> Vec<HmCoeff> {
    let dim = params.hadamard_dim() as u64;
    let t = params.t() as usize;
    let mut coeffs: Vec<HmCoeff> = (0..t)
        .map(|_| {
            let j = rng.below(dim) as usize;
            let mut s = hadamard::entry(x, j);
            if negate {
                s = -s;
            }
            HmCoeff {
                index: j as u32,
                sign: s,
            }
        })
        .collect();
    // The t signs form one symbol of [2^t]; keep it with p*, otherwise
    // replace it by a uniform different pattern.
    if !rng.bernoulli(params.p_star()) {
        let flip = 1 + rng.below(params.g() - 1);
        for (k, c) in coeffs.iter_mut().enumerate() {
            if flip >> k & 1 == 1 {
                c.sign = -c.sign;
            }
        }
    }
    coeffs
}

fn hadamard_response(params: &PureParams, x: usize, rng: &mut Rng) -> u64 {
    let dim = params.hadamard_dim() as u64;
    let row = x + 1;
    let want: i8 = if rng.bernoulli(params.p_star()) { 1 } else { -1 };
    // Exactly half of each non-zero row has each sign.
    loop {
        let j = rng.below(dim);
        if hadamard::entry(row, j as usize) == want {
            return j;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{oracle_params, OracleOptions};

    const LN3: f64 = 1.0986122886681098;

    #[test]
    fn rejects_out_of_range() {
        let p = oracle_params(OracleKind::De, 1.0, 4, &OracleOptions::default()).unwrap();
        let mut rng = Rng::seed_from(0);
        assert!(encode(&p, 4, &mut rng).is_err());
    }

    #[test]
    fn de_large_eps_is_truthful() {
        let p = oracle_params(OracleKind::De, 60.0, 10, &OracleOptions::default()).unwrap();
        let mut rng = Rng::seed_from(1);
        for x in 0..10 {
            assert_eq!(encode(&p, x, &mut rng).unwrap(), Report::De(x as u32));
        }
    }

    #[test]
    fn oue_bit_marginals() {
        let eps = 1.5f64;
        let d = 8;
        let p = oracle_params(OracleKind::Oue, eps, d, &OracleOptions::default()).unwrap();
        let mut rng = Rng::seed_from(2);
        let trials = 100_000;
        let mut ones = vec![0u32; d];
        for _ in 0..trials {
            if let Report::Ue(b) = encode(&p, 3, &mut rng).unwrap() {
                for i in b.iter_ones() {
                    ones[i] += 1;
                }
            }
        }
        let q = 1.0 / (eps.exp() + 1.0);
        for (i, &c) in ones.iter().enumerate() {
            let f = c as f64 / trials as f64;
            let want = if i == 3 { 0.5 } else { q };
            assert!((f - want).abs() < 0.01, "bit {i}: {f} vs {want}");
        }
    }

    #[test]
    fn hr_reports_positive_coefficient() {
        let eps = 1.2f64;
        let p = oracle_params(OracleKind::Hr, eps, 3, &OracleOptions::default()).unwrap();
        assert_eq!(p.hadamard_dim(), 4);
        let mut rng = Rng::seed_from(3);
        let trials = 100_000;
        let x = 1;
        let hits = (0..trials)
            .filter(|_| match encode(&p, x, &mut rng).unwrap() {
                Report::Hr(j) => hadamard::entry(x + 1, j as usize) == 1,
                _ => unreachable!(),
            })
            .count();
        let f = hits as f64 / trials as f64;
        let want = eps.exp() / (eps.exp() + 1.0);
        assert!((f - want).abs() < 0.01, "{f} vs {want}");
    }

    #[test]
    fn hm_coefficient_transmission() {
        let p = oracle_params(OracleKind::Hm, LN3, 16, &OracleOptions::default().with_t(2)).unwrap();
        let mut rng = Rng::seed_from(4);
        let trials = 100_000;
        let x = 5;
        let mut correct = 0;
        for _ in 0..trials {
            if let Report::Hm(cs) = encode(&p, x, &mut rng).unwrap() {
                assert_eq!(cs.len(), 2);
                correct += cs
                    .iter()
                    .filter(|c| c.sign == hadamard::entry(x, c.index as usize))
                    .count();
            }
        }
        let f = correct as f64 / (2 * trials) as f64;
        assert!((f - 2.0 / 3.0).abs() < 0.01, "{f}");
    }

    #[test]
    fn lh_indices() {
        let p = oracle_params(OracleKind::Flh, 2.0, 50, &OracleOptions::default().with_k_prime(7))
            .unwrap();
        let mut rng = Rng::seed_from(5);
        for _ in 0..1000 {
            match encode(&p, 9, &mut rng).unwrap() {
                Report::Lh { index, value } => {
                    assert!(index < 7);
                    assert!((value as u64) < p.g());
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn noiseless_is_truthful() {
        let mut rng = Rng::seed_from(6);
        let de = oracle_params(OracleKind::De, 1.0, 9, &OracleOptions::default().noiseless()).unwrap();
        let ue = oracle_params(OracleKind::Oue, 1.0, 9, &OracleOptions::default().noiseless()).unwrap();
        for x in 0..9 {
            assert_eq!(encode(&de, x, &mut rng).unwrap(), Report::De(x as u32));
            match encode(&ue, x, &mut rng).unwrap() {
                Report::Ue(b) => assert_eq!(b.iter_ones().collect::<Vec<_>>(), vec![x]),
                _ => unreachable!(),
            }
        }
    }
}
