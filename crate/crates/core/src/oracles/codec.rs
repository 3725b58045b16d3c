//! Compact binary encoding of [`Report`]s.
//!
//! A record is a one-byte oracle tag followed by LEB128 varints. Unary bit
//! vectors are written as their length and then `ceil(len / 8)` bytes, least
//! significant bit first. HM sign bits are packed the same way after the
//! coefficient indices (bit set means `-1`).

use super::{BitVector, HmCoeff, OracleKind, Report};
use crate::error::{Error, Result};

const TAG_DE: u8 = 0;
const TAG_UE: u8 = 1;
const TAG_LH: u8 = 3;
const TAG_HM: u8 = 6;
const TAG_HR: u8 = 7;

pub fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

/// Reads one varint, advancing `buf`.
pub fn read_varint(buf: &mut &[u8]) -> Result<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let (&b, rest) = buf
            .split_first()
            .ok_or_else(|| Error::Codec("truncated varint".into()))?;
        *buf = rest;
        let bits = (b & 0x7f) as u64;
        if shift == 63 && bits > 1 {
            return Err(Error::Codec("varint overflows u64".into()));
        }
        v |= bits << shift;
        if b & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(Error::Codec("varint longer than 10 bytes".into()))
}

fn read_u32(buf: &mut &[u8], what: &str) -> Result<u32> {
    let v = read_varint(buf)?;
    u32::try_from(v).map_err(|_| Error::Codec(format!("{what} {v} exceeds u32")))
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Codec(format!("need {n} bytes, have {}", buf.len())));
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Ok(head)
}

fn write_bits(out: &mut Vec<u8>, bits: impl Iterator<Item = bool>, len: usize) {
    let start = out.len();
    out.resize(start + len.div_ceil(8), 0);
    for (i, b) in bits.enumerate() {
        if b {
            out[start + i / 8] |= 1 << (i % 8);
        }
    }
}

/// Tag byte identifying the oracle family that produced a report.
pub fn report_tag(report: &Report) -> u8 {
    match report {
        Report::De(_) => TAG_DE,
        Report::Ue(_) => TAG_UE,
        Report::Lh { .. } => TAG_LH,
        Report::Hm(_) => TAG_HM,
        Report::Hr(_) => TAG_HR,
    }
}

pub fn write_report(out: &mut Vec<u8>, report: &Report) {
    out.push(report_tag(report));
    match report {
        Report::De(v) | Report::Hr(v) => write_varint(out, *v as u64),
        Report::Ue(bits) => {
            write_varint(out, bits.len() as u64);
            write_bits(out, (0..bits.len()).map(|i| bits.get(i)), bits.len());
        }
        Report::Lh { index, value } => {
            write_varint(out, *index as u64);
            write_varint(out, *value as u64);
        }
        Report::Hm(coeffs) => {
            write_varint(out, coeffs.len() as u64);
            for c in coeffs {
                write_varint(out, c.index as u64);
            }
            write_bits(out, coeffs.iter().map(|c| c.sign < 0), coeffs.len());
        }
    }
}

/// Reads one report, advancing `buf` past it.
pub fn read_report(buf: &mut &[u8]) -> Result<Report> {
    let tag = *take(buf, 1)?.first().expect("one byte");
    Ok(match tag {
        TAG_DE => Report::De(read_u32(buf, "value")?),
        TAG_HR => Report::Hr(read_u32(buf, "coefficient")?),
        TAG_UE => {
            let len = read_u32(buf, "length")? as usize;
            let bytes = take(buf, len.div_ceil(8))?;
            if len % 8 != 0 && bytes[len / 8] >> (len % 8) != 0 {
                return Err(Error::Codec("padding bits set in bit vector".into()));
            }
            let mut words = vec![0u64; len.div_ceil(64)];
            for (i, &b) in bytes.iter().enumerate() {
                words[i / 8] |= (b as u64) << (8 * (i % 8));
            }
            Report::Ue(BitVector::from_words(len, words))
        }
        TAG_LH => Report::Lh {
            index: read_u32(buf, "hash index")?,
            value: read_u32(buf, "hash value")?,
        },
        TAG_HM => {
            let t = read_varint(buf)?;
            if t == 0 || t > super::MAX_HM_T as u64 {
                return Err(Error::Codec(format!("HM report with {t} coefficients")));
            }
            let t = t as usize;
            let idx = (0..t)
                .map(|_| read_u32(buf, "coefficient"))
                .collect::<Result<Vec<_>>>()?;
            let signs = take(buf, t.div_ceil(8))?;
            let coeffs = idx
                .into_iter()
                .enumerate()
                .map(|(k, index)| HmCoeff {
                    index,
                    sign: if signs[k / 8] >> (k % 8) & 1 == 1 { -1 } else { 1 },
                })
                .collect();
            Report::Hm(coeffs)
        }
        other => return Err(Error::Codec(format!("unknown report tag {other}"))),
    })
}

pub fn encode_report(report: &Report) -> Vec<u8> {
    let mut out = Vec::new();
    write_report(&mut out, report);
    out
}

/// Decodes exactly one report; trailing bytes are an error.
pub fn decode_report(mut bytes: &[u8]) -> Result<Report> {
    let r = read_report(&mut bytes)?;
    if !bytes.is_empty() {
        return Err(Error::Codec(format!("{} trailing bytes", bytes.len())));
    }
    Ok(r)
}

/// The oracle kinds whose reports share `tag`.
pub fn kinds_for_tag(tag: u8) -> &'static [OracleKind] {
    match tag {
        TAG_DE => &[OracleKind::De],
        TAG_UE => &[OracleKind::Sue, OracleKind::Oue],
        TAG_LH => &[OracleKind::Blh, OracleKind::Olh, OracleKind::Flh],
        TAG_HM => &[OracleKind::Hm],
        TAG_HR => &[OracleKind::Hr],
        _ => &[],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::Rng;
    use crate::oracles::{encode, oracle_params, OracleOptions};
    use proptest::prelude::*;

    #[test]
    fn varint_layout() {
        let mut out = Vec::new();
        write_varint(&mut out, 300);
        assert_eq!(out, vec![0xac, 0x02]);
        let mut s = out.as_slice();
        assert_eq!(read_varint(&mut s).unwrap(), 300);
        assert!(s.is_empty());
        let mut max = Vec::new();
        write_varint(&mut max, u64::MAX);
        assert_eq!(max.len(), 10);
        assert_eq!(read_varint(&mut max.as_slice()).unwrap(), u64::MAX);
    }

    #[test]
    fn known_records() {
        assert_eq!(encode_report(&Report::De(5)), vec![0, 5]);
        assert_eq!(encode_report(&Report::Lh { index: 1, value: 2 }), vec![3, 1, 2]);
        let mut b = BitVector::zeros(10);
        b.set(0, true);
        b.set(9, true);
        assert_eq!(encode_report(&Report::Ue(b)), vec![1, 10, 0b0000_0001, 0b0000_0010]);
        let hm = Report::Hm(vec![
            HmCoeff { index: 3, sign: 1 },
            HmCoeff { index: 200, sign: -1 },
        ]);
        assert_eq!(encode_report(&hm), vec![6, 2, 3, 0xc8, 0x01, 0b10]);
    }

    #[test]
    fn malformed_input() {
        assert!(decode_report(&[]).is_err());
        assert!(decode_report(&[9, 0]).is_err());
        assert!(decode_report(&[0, 0x80]).is_err());
        assert!(decode_report(&[0, 1, 1]).is_err());
        assert!(decode_report(&[1, 3, 0b1000]).is_err());
        assert!(decode_report(&[6, 0]).is_err());
        assert!(decode_report(&[0, 0x80, 0x80, 0x80, 0x80, 0x10]).is_err());
    }

    #[test]
    fn every_oracle_round_trips() {
        let opts = OracleOptions::default().with_k_prime(8);
        let mut rng = Rng::seed_from(3);
        for kind in OracleKind::ALL {
            let p = oracle_params(kind, 2.0, 70, &opts).unwrap();
            for x in 0..70 {
                let r = encode(&p, x, &mut rng).unwrap();
                let bytes = encode_report(&r);
                assert!(kinds_for_tag(bytes[0]).contains(&kind));
                assert_eq!(decode_report(&bytes).unwrap(), r);
            }
        }
    }

    proptest! {
        #[test]
        fn varint_round_trip(v: u64) {
            let mut out = Vec::new();
            write_varint(&mut out, v);
            prop_assert_eq!(read_varint(&mut out.as_slice()).unwrap(), v);
        }

        #[test]
        fn stream_round_trip(values in proptest::collection::vec(0u32..1000, 0..50)) {
            let reports: Vec<Report> = values.iter().map(|&v| Report::Hr(v)).collect();
            let mut out = Vec::new();
            for r in &reports {
                write_report(&mut out, r);
            }
            let mut s = out.as_slice();
            let back: Vec<Report> = (0..reports.len()).map(|_| read_report(&mut s).unwrap()).collect();
            prop_assert!(s.is_empty());
            prop_assert_eq!(back, reports);
        }
    }
}
