use super::{OracleKind, PureParams, Report};
use crate::error::{Error, Result};
use crate::hadamard;
use crate::hashing::{mix64, HashFamily};

#[derive(Debug, Clone, PartialEq)]
enum Accumulator {
    /// DE and UE: weighted support counts per item. HR: report counts per
    /// coefficient index.
    Counts(Vec<f64>),
    /// BLH / OLH: every user has a private hash function, so the reports are
    /// kept and each estimate re-hashes them.
    Reports(Vec<(u32, u32, f64)>),
    /// FLH: a `k' x g` histogram, one row per shared hash function.
    PerHash(Vec<f64>),
    /// HM: signed sums per coefficient index.
    Coefficients(Vec<f64>),
}

/// Mergeable server-side aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct AggState {
    params: PureParams,
    n: f64,
    acc: Accumulator,
}

pub fn aggregate<'a, I>(params: &PureParams, reports: I) -> Result<AggState>
where
    I: IntoIterator<Item = &'a Report>,
{
    let mut state = AggState::new(params.clone());
    for r in reports {
        state.add(r)?;
    }
    Ok(state)
}

impl AggState {
    pub fn new(params: PureParams) -> Self {
        let acc = match params.kind() {
            OracleKind::De | OracleKind::Sue | OracleKind::Oue => {
                Accumulator::Counts(vec![0.0; params.domain()])
            }
            OracleKind::Hr => Accumulator::Counts(vec![0.0; params.hadamard_dim()]),
            OracleKind::Blh | OracleKind::Olh => Accumulator::Reports(Vec::new()),
            OracleKind::Flh => {
                Accumulator::PerHash(vec![0.0; (params.k_prime() * params.g()) as usize])
            }
            OracleKind::Hm => Accumulator::Coefficients(vec![0.0; params.hadamard_dim()]),
        };
        Self { params, n: 0.0, acc }
    }

    pub fn params(&self) -> &PureParams {
        &self.params
    }

    /// Total (weighted) number of reports.
    pub fn n_reports(&self) -> f64 {
        self.n
    }

    pub fn add(&mut self, report: &Report) -> Result<()> {
        self.add_weighted(report, 1.0)
    }

    /// Add a report with multiplicity `w`. Fractional weights let a test feed
    /// an exact output distribution instead of samples.
    pub fn add_weighted(&mut self, report: &Report, w: f64) -> Result<()> {
        let p = &self.params;
        let bad = |what: String| Err(Error::MixedParameters(what));
        if !report.matches(p.kind()) {
            return bad(format!("{:?} report for a {} aggregator", report, p.kind()));
        }
        match (&mut self.acc, report) {
            (Accumulator::Counts(c), Report::De(v)) => {
                let v = *v as usize;
                if v >= c.len() {
                    return bad(format!("value {v} outside domain {}", c.len()));
                }
                c[v] += w;
            }
            (Accumulator::Counts(c), Report::Ue(bits)) => {
                if bits.len() != c.len() {
                    return bad(format!("bit vector of length {} for d={}", bits.len(), c.len()));
                }
                for i in bits.iter_ones() {
                    c[i] += w;
                }
            }
            (Accumulator::Counts(c), Report::Hr(j)) => {
                let j = *j as usize;
                if j >= c.len() {
                    return bad(format!("coefficient {j} outside dimension {}", c.len()));
                }
                c[j] += w;
            }
            (Accumulator::Reports(rs), Report::Lh { index, value }) => {
                if *value as u64 >= p.g() {
                    return bad(format!("hash value {value} outside g={}", p.g()));
                }
                rs.push((*index, *value, w));
            }
            (Accumulator::PerHash(h), Report::Lh { index, value }) => {
                if *index as u64 >= p.k_prime() || *value as u64 >= p.g() {
                    return bad(format!("FLH report ({index}, {value}) out of range"));
                }
                h[(*index as u64 * p.g() + *value as u64) as usize] += w;
            }
            (Accumulator::Coefficients(s), Report::Hm(coeffs)) => {
                if coeffs.len() != p.t() as usize {
                    return bad(format!("{} coefficients, expected t={}", coeffs.len(), p.t()));
                }
                for c in coeffs {
                    let j = c.index as usize;
                    if j >= s.len() || c.sign.abs() != 1 {
                        return bad(format!("malformed coefficient {c:?}"));
                    }
                    s[j] += w * c.sign as f64;
                }
            }
            _ => unreachable!("report/accumulator pairing checked above"),
        }
        self.n += w;
        Ok(())
    }

    /// Combine two partial aggregates over the same parameters.
    pub fn merge(&mut self, other: &AggState) -> Result<()> {
        if self.params != other.params {
            return Err(Error::MixedParameters(format!(
                "cannot merge {} into {}",
                other.params.describe(),
                self.params.describe()
            )));
        }
        match (&mut self.acc, &other.acc) {
            (Accumulator::Counts(a), Accumulator::Counts(b))
            | (Accumulator::PerHash(a), Accumulator::PerHash(b))
            | (Accumulator::Coefficients(a), Accumulator::Coefficients(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += *y;
                }
            }
            (Accumulator::Reports(a), Accumulator::Reports(b)) => a.extend_from_slice(b),
            _ => unreachable!("equal params imply equal accumulator shapes"),
        }
        self.n += other.n;
        Ok(())
    }

    fn unbias(&self, support: f64) -> f64 {
        let (p, q) = (self.params.p_star(), self.params.q_star());
        (support - self.n * q) / (p - q)
    }

    fn hm_scale(&self) -> f64 {
        let c = 2.0 * self.params.hm_coefficient_keep() - 1.0;
        1.0 / (c * self.params.t() as f64)
    }

    /// Unbiased estimate of the count of item `x`.
    pub fn estimate(&self, x: usize) -> f64 {
        assert!(x < self.params.domain(), "item {x} outside domain");
        let p = &self.params;
        match &self.acc {
            Accumulator::Counts(c) if p.kind() == OracleKind::Hr => {
                let support: f64 = c
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| hadamard::entry(x + 1, j) == 1)
                    .map(|(_, &w)| w)
                    .sum();
                self.unbias(support)
            }
            Accumulator::Counts(c) => self.unbias(c[x]),
            Accumulator::Reports(rs) => {
                let fam = p.family();
                let support: f64 = rs
                    .iter()
                    .filter(|&&(i, v, _)| fam.hash(i as u64, x as u64) == v as u64)
                    .map(|&(_, _, w)| w)
                    .sum();
                self.unbias(support)
            }
            Accumulator::PerHash(h) => {
                let fam = p.family();
                let g = p.g();
                let support: f64 = (0..p.k_prime())
                    .map(|i| h[(i * g + fam.hash(i, x as u64)) as usize])
                    .sum();
                self.unbias(support)
            }
            Accumulator::Coefficients(s) => {
                let sum: f64 = s
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| hadamard::entry(x, j) as f64 * v)
                    .sum();
                sum * self.hm_scale()
            }
        }
    }

    /// Estimates for every item of the domain, via the fastest decode each
    /// oracle admits.
    pub fn estimate_all(&self) -> Vec<f64> {
        let p = &self.params;
        let d = p.domain();
        match &self.acc {
            Accumulator::Counts(c) if p.kind() == OracleKind::Hr => {
                // support(x) = (n + sum_j H[x+1][j] c_j) / 2
                let spectrum = hadamard::fwht(c).expect("power-of-two dimension");
                (0..d)
                    .map(|x| self.unbias((self.n + spectrum[x + 1]) / 2.0))
                    .collect()
            }
            Accumulator::Counts(c) => c.iter().map(|&s| self.unbias(s)).collect(),
            Accumulator::Reports(rs) => {
                let mixed: Vec<u64> = (0..d as u64).map(mix64).collect();
                let mut support = vec![0.0; d];
                let fam = p.family();
                for &(i, v, w) in rs {
                    let member = fam.member(i as u64);
                    let v = v as u64;
                    for (x, (s, &mx)) in support.iter_mut().zip(&mixed).enumerate() {
                        if member.hash_premixed(mx, x as u64) == v {
                            *s += w;
                        }
                    }
                }
                support.into_iter().map(|s| self.unbias(s)).collect()
            }
            Accumulator::PerHash(_) => {
                let m = flh_precompute(p.k_prime(), d, p.g(), p.family());
                flh_decode(self, &m).0
            }
            Accumulator::Coefficients(s) => {
                let spectrum = hadamard::fwht(s).expect("power-of-two dimension");
                let scale = self.hm_scale();
                spectrum[..d].iter().map(|&v| v * scale).collect()
            }
        }
    }
}

/// `k' x d` table of `h_i(j)` shared by all FLH aggregates with the same
/// parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlhMatrix {
    k_prime: u64,
    d: usize,
    g: u64,
    family: HashFamily,
    values: Vec<u32>,
}

impl FlhMatrix {
    pub fn k_prime(&self) -> u64 {
        self.k_prime
    }

    pub fn domain(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: u64, j: usize) -> u32 {
        self.values[i as usize * self.d + j]
    }
}

pub fn flh_precompute(k_prime: u64, d: usize, g: u64, family: &HashFamily) -> FlhMatrix {
    let family = family.with_range(g).expect("range validated by params");
    let mixed: Vec<u64> = (0..d as u64).map(mix64).collect();
    let mut values = Vec::with_capacity(k_prime as usize * d);
    for i in 0..k_prime {
        let m = family.member(i);
        values.extend(
            mixed
                .iter()
                .enumerate()
                .map(|(x, &mx)| m.hash_premixed(mx, x as u64) as u32),
        );
    }
    FlhMatrix {
        k_prime,
        d,
        g,
        family,
        values,
    }
}

/// Batched FLH decode. Returns the estimates and the number of matrix
/// lookups performed (always `k' * d`).
pub fn flh_decode(state: &AggState, matrix: &FlhMatrix) -> (Vec<f64>, u64) {
    let p = state.params();
    let Accumulator::PerHash(hist) = &state.acc else {
        panic!("flh_decode on a {} aggregate", p.kind());
    };
    assert!(
        matrix.k_prime == p.k_prime()
            && matrix.d == p.domain()
            && matrix.g == p.g()
            && matrix.family.seed() == p.family().seed()
            && matrix.family.mode() == p.family().mode(),
        "FLH matrix built for different parameters"
    );
    let d = matrix.d;
    let g = matrix.g as usize;
    let mut support = vec![0.0; d];
    let mut lookups = 0u64;
    for (i, row) in matrix.values.chunks_exact(d).enumerate() {
        let h = &hist[i * g..(i + 1) * g];
        if h.iter().all(|&c| c == 0.0) {
            // Unused hash member: contributes nothing, but still count the
            // row so the work bound stays exact.
            lookups += d as u64;
            continue;
        }
        for (s, &v) in support.iter_mut().zip(row) {
            *s += h[v as usize];
        }
        lookups += d as u64;
    }
    let est = support.into_iter().map(|s| state.unbias(s)).collect();
    (est, lookups)
}
