//! Frequency oracles behind one encode / aggregate / estimate interface.
//!
//! Every oracle here is a *pure* protocol: a report `y` supports a set of
//! items, an input is mapped to a supporting report with probability `p*`
//! and any other input with probability `q*`. Aggregation then reduces to
//! counting support and applying `(count - n q*) / (p* - q*)`. The Hadamard
//! mechanism is decoded per coefficient through one inverse transform
//! instead (see [`AggState::estimate_all`]).

mod aggregate;
pub mod codec;
mod encode;
pub mod enumerate;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate, flh_decode, flh_precompute, AggState, FlhMatrix};
pub use encode::encode;
pub(crate) use encode::encode_signed;
pub use report::{BitVector, HmCoeff, Report};

use crate::error::{invalid, Error, Result};
use crate::hadamard::HadamardDim;
use crate::hashing::HashFamily;

/// Largest domain for which unary encodings materialize their bit vectors.
pub const MAX_UNARY_DOMAIN: usize = 1 << 17;

/// Largest supported number of sampled Hadamard coefficients.
pub const MAX_HM_T: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OracleKind {
    De,
    Sue,
    Oue,
    Blh,
    Olh,
    Flh,
    Hm,
    Hr,
}

impl OracleKind {
    pub const ALL: [OracleKind; 8] = [
        OracleKind::De,
        OracleKind::Sue,
        OracleKind::Oue,
        OracleKind::Blh,
        OracleKind::Olh,
        OracleKind::Flh,
        OracleKind::Hm,
        OracleKind::Hr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OracleKind::De => "DE",
            OracleKind::Sue => "SUE",
            OracleKind::Oue => "OUE",
            OracleKind::Blh => "BLH",
            OracleKind::Olh => "OLH",
            OracleKind::Flh => "FLH",
            OracleKind::Hm => "HM",
            OracleKind::Hr => "HR",
        }
    }

    pub fn is_local_hashing(self) -> bool {
        matches!(self, OracleKind::Blh | OracleKind::Olh | OracleKind::Flh)
    }

    pub fn is_unary(self) -> bool {
        matches!(self, OracleKind::Sue | OracleKind::Oue)
    }
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown oracle {s:?}")))
    }
}

/// Knobs that are not determined by `(kind, eps, d)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// HM: coefficients per report. Defaults to [`hm_optimal_t`].
    pub t: Option<u32>,
    /// FLH: size of the shared hash pool.
    pub k_prime: Option<u64>,
    /// LH: override the hash range.
    pub g: Option<u64>,
    /// Seed of the local-hashing family. With FLH this fixes the `k'` shared
    /// functions, so it should change between independent runs.
    pub family_seed: u64,
    /// LH: use the collision-free test family (requires `g >= d`).
    pub injective_hash: bool,
    /// Test hook: always take the truthful branch. Breaks the privacy
    /// guarantee.
    pub noiseless: bool,
}

impl OracleOptions {
    pub fn with_t(mut self, t: u32) -> Self {
        self.t = Some(t);
        self
    }

    pub fn with_k_prime(mut self, k: u64) -> Self {
        self.k_prime = Some(k);
        self
    }

    pub fn with_family_seed(mut self, seed: u64) -> Self {
        self.family_seed = seed;
        self
    }

    pub fn noiseless(mut self) -> Self {
        self.noiseless = true;
        self
    }
}

/// Closed-form parameterization of a pure protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureParams {
    kind: OracleKind,
    eps: f64,
    d: usize,
    p_star: f64,
    q_star: f64,
    g: u64,
    t: u32,
    k_prime: u64,
    dim: usize,
    family: HashFamily,
    noiseless: bool,
}

pub fn oracle_params(
    kind: OracleKind,
    eps: f64,
    d: usize,
    opts: &OracleOptions,
) -> Result<PureParams> {
    PureParams::new(kind, eps, d, opts)
}

impl PureParams {
    pub fn new(kind: OracleKind, eps: f64, d: usize, opts: &OracleOptions) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(invalid(format!("eps must be positive and finite, got {eps}")));
        }
        if d < 2 {
            return Err(invalid(format!("domain size must be at least 2, got {d}")));
        }
        if d > u32::MAX as usize {
            return Err(invalid(format!("domain size {d} exceeds 2^32")));
        }
        if kind.is_unary() && d > MAX_UNARY_DOMAIN {
            return Err(invalid(format!(
                "{kind} materializes a {d}-bit vector per report; refusing domains above {MAX_UNARY_DOMAIN}"
            )));
        }
        let e = eps.exp();
        let mut t = 0;
        let mut k_prime = 0;
        let mut dim = 0;
        let mut g = 2u64;
        let (p, q) = match kind {
            OracleKind::De => {
                g = d as u64;
                let denom = e + d as f64 - 1.0;
                (e / denom, 1.0 / denom)
            }
            OracleKind::Sue => {
                let h = (eps / 2.0).exp();
                (h / (h + 1.0), 1.0 / (h + 1.0))
            }
            OracleKind::Oue => (0.5, 1.0 / (e + 1.0)),
            OracleKind::Blh | OracleKind::Olh | OracleKind::Flh => {
                g = match (kind, opts.g) {
                    (_, Some(g)) => g,
                    (OracleKind::Blh, None) => 2,
                    _ => olh_range(eps),
                };
                if g < 2 || g > u32::MAX as u64 {
                    return Err(invalid(format!("hash range {g} outside [2, 2^32)")));
                }
                if kind == OracleKind::Flh {
                    k_prime = opts
                        .k_prime
                        .ok_or_else(|| invalid("FLH requires k_prime"))?;
                    if k_prime == 0 || k_prime > u32::MAX as u64 {
                        return Err(invalid(format!("k_prime {k_prime} outside [1, 2^32)")));
                    }
                }
                if opts.injective_hash && g < d as u64 {
                    return Err(invalid(format!(
                        "injective hashing needs g >= d (g = {g}, d = {d})"
                    )));
                }
                let p = e / (e + g as f64 - 1.0);
                // An injective family only lets the perturbation create
                // false support; a universal one adds collisions at rate 1/g.
                let q = if opts.injective_hash {
                    (1.0 - p) / (g as f64 - 1.0)
                } else {
                    1.0 / g as f64
                };
                (p, q)
            }
            OracleKind::Hm => {
                t = opts.t.unwrap_or_else(|| hm_optimal_t(eps));
                if t == 0 || t > MAX_HM_T {
                    return Err(invalid(format!("HM t must lie in [1, {MAX_HM_T}], got {t}")));
                }
                dim = HadamardDim::covering(d).get();
                g = 1u64 << t;
                (e / (e + g as f64 - 1.0), 1.0 / g as f64)
            }
            OracleKind::Hr => {
                // Items occupy rows 1..=d; row 0 is constant and would
                // support every item.
                dim = HadamardDim::covering(d + 1).get();
                (e / (e + 1.0), 0.5)
            }
        };
        let (p_star, q_star) = if opts.noiseless {
            let q = match kind {
                OracleKind::De | OracleKind::Sue | OracleKind::Oue => 0.0,
                OracleKind::Blh | OracleKind::Olh | OracleKind::Flh if opts.injective_hash => 0.0,
                _ => q,
            };
            (1.0, q)
        } else {
            (p, q)
        };
        let family = if opts.injective_hash {
            HashFamily::injective(opts.family_seed, g)?
        } else {
            HashFamily::new(opts.family_seed, g)?
        };
        let params = Self {
            kind,
            eps,
            d,
            p_star,
            q_star,
            g,
            t,
            k_prime,
            dim,
            family,
            noiseless: opts.noiseless,
        };
        params.check()?;
        Ok(params)
    }

    fn check(&self) -> Result<()> {
        let (p, q) = (self.p_star, self.q_star);
        if !(q >= 0.0 && q < p && p <= 1.0) {
            return Err(invalid(format!("need 0 <= q* < p* <= 1, got p*={p}, q*={q}")));
        }
        if !self.noiseless && (q <= 0.0 || p / q > self.eps.exp() * (1.0 + 1e-12)) {
            return Err(invalid(format!(
                "p*/q* = {} exceeds e^eps = {}",
                p / q,
                self.eps.exp()
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn domain(&self) -> usize {
        self.d
    }

    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    pub fn q_star(&self) -> f64 {
        self.q_star
    }

    /// Size of the alphabet the direct-encoding step perturbs over.
    pub fn g(&self) -> u64 {
        self.g
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn k_prime(&self) -> u64 {
        self.k_prime
    }

    /// Padded Hadamard dimension (HM, HR), zero otherwise.
    pub fn hadamard_dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &HashFamily {
        &self.family
    }

    pub fn is_noiseless(&self) -> bool {
        self.noiseless
    }

    /// DE-step probability of each specific wrong symbol.
    pub(crate) fn p_other(&self) -> f64 {
        match self.kind {
            OracleKind::Sue | OracleKind::Oue => self.q_star,
            OracleKind::Hr => 1.0 - self.p_star,
            _ => (1.0 - self.p_star) / (self.g as f64 - 1.0),
        }
    }

    /// HM: probability a single transmitted coefficient keeps its sign.
    pub fn hm_coefficient_keep(&self) -> f64 {
        let g = self.g as f64;
        let half = (self.g / 2) as f64;
        self.p_star + (1.0 - self.p_star) * (half - 1.0) / (g - 1.0)
    }

    /// Exact per-report variance of the `q*` case, `q*(1-q*)/(p*-q*)^2`.
    pub fn q_variance(&self) -> f64 {
        let (p, q) = (self.p_star, self.q_star);
        q * (1.0 - q) / ((p - q) * (p - q))
    }

    /// Per-report variance (non-holder case) of the estimator actually used
    /// by [`AggState`]. Matches [`q_variance`](Self::q_variance) for every
    /// kind except HM with `t > 1`, whose per-coefficient decode pays
    /// `(e^eps + 2^t - 1)^2 / (t (e^eps - 1)^2)`.
    pub fn decode_variance(&self) -> f64 {
        match self.kind {
            OracleKind::Hm => {
                let c = 2.0 * self.hm_coefficient_keep() - 1.0;
                1.0 / (self.t as f64 * c * c)
            }
            _ => self.q_variance(),
        }
    }

    pub fn theoretical_variance(&self) -> f64 {
        variance_formula(self.kind, self.eps, self.d, self.t.max(1))
    }

    pub fn describe(&self) -> String {
        match self.kind {
            OracleKind::Flh => format!("FLH(k'={})", self.k_prime),
            OracleKind::Hm => format!("HM(t={})", self.t),
            k => k.name().to_string(),
        }
    }
}

/// `g = round(e^eps) + 1`, at least 2.
pub fn olh_range(eps: f64) -> u64 {
    ((eps.exp().round() as u64) + 1).max(2)
}

/// `t = ceil(eps)`, at least 1.
pub fn hm_optimal_t(eps: f64) -> u32 {
    (eps.ceil() as u32).clamp(1, MAX_HM_T)
}

/// Per-report variance bound of the `q*`-dominated case.
///
/// HM uses `t = 1` here; see [`PureParams::theoretical_variance`] for other
/// `t`.
pub fn theoretical_variance(kind: OracleKind, eps: f64, d: usize) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    Ok(variance_formula(kind, eps, d, 1))
}

fn variance_formula(kind: OracleKind, eps: f64, d: usize, t: u32) -> f64 {
    let e = eps.exp();
    let em1 = e - 1.0;
    match kind {
        OracleKind::De => (e + d as f64 - 2.0) / (em1 * em1),
        OracleKind::Sue => {
            let h = (eps / 2.0).exp();
            h / ((h - 1.0) * (h - 1.0))
        }
        OracleKind::Oue | OracleKind::Olh | OracleKind::Flh => 4.0 * e / (em1 * em1),
        OracleKind::Blh | OracleKind::Hr => ((e + 1.0) / em1).powi(2),
        OracleKind::Hm => {
            let g = (1u64 << t) as f64;
            (e + g - 1.0).powi(2) / ((g - 1.0) * em1 * em1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN3: f64 = 1.0986122886681098;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn de_params() {
        let p = oracle_params(OracleKind::De, LN3, 4, &OracleOptions::default()).unwrap();
        assert!(close(p.p_star(), 0.5));
        assert!(close(p.q_star(), 1.0 / 6.0));
    }

    #[test]
    fn ue_params() {
        let p = oracle_params(OracleKind::Oue, LN3, 8, &OracleOptions::default()).unwrap();
        assert!(close(p.p_star(), 0.5));
        assert!(close(p.q_star(), 0.25));
        let s = oracle_params(OracleKind::Sue, 2.0, 8, &OracleOptions::default()).unwrap();
        let h = 1f64.exp();
        assert!(close(s.p_star(), h / (h + 1.0)));
        assert!(close(s.p_star() + s.q_star(), 1.0));
    }

    #[test]
    fn lh_params() {
        let p = oracle_params(OracleKind::Olh, LN3, 100, &OracleOptions::default()).unwrap();
        assert_eq!(p.g(), 4);
        assert!(close(p.p_star(), 0.5));
        assert!(close(p.q_star(), 0.25));
        let b = oracle_params(OracleKind::Blh, LN3, 100, &OracleOptions::default()).unwrap();
        assert_eq!(b.g(), 2);
        assert!(close(b.p_star(), 0.75));
        assert!(oracle_params(OracleKind::Flh, LN3, 100, &OracleOptions::default()).is_err());
        let f = oracle_params(
            OracleKind::Flh,
            LN3,
            100,
            &OracleOptions::default().with_k_prime(10),
        )
        .unwrap();
        assert_eq!(f.k_prime(), 10);
        assert_eq!(olh_range(0.01), 2);
        assert_eq!(olh_range(3.0), 21);
    }

    #[test]
    fn hm_params() {
        let p = oracle_params(OracleKind::Hm, LN3, 16, &OracleOptions::default().with_t(2)).unwrap();
        assert!(close(p.p_star(), 0.5));
        assert!(close(p.q_star(), 0.25));
        assert!(close(p.hm_coefficient_keep(), 2.0 / 3.0));
        assert_eq!(p.hadamard_dim(), 16);
        let hr = oracle_params(OracleKind::Hr, LN3, 16, &OracleOptions::default()).unwrap();
        assert!(close(hr.p_star(), 0.75));
        assert!(close(hr.q_star(), 0.5));
        assert_eq!(hr.hadamard_dim(), 32);
    }

    #[test]
    fn hm_t_rule() {
        assert_eq!(hm_optimal_t(0.5), 1);
        assert_eq!(hm_optimal_t(3.0), 3);
        assert_eq!(hm_optimal_t(LN3), 2);
        assert_eq!(hm_optimal_t(1e-9), 1);
    }

    #[test]
    fn variance_table() {
        assert!(close(theoretical_variance(OracleKind::Olh, LN3, 4).unwrap(), 3.0));
        assert!(close(theoretical_variance(OracleKind::De, LN3, 4).unwrap(), 1.25));
        assert!(close(theoretical_variance(OracleKind::Blh, LN3, 4).unwrap(), 4.0));
        assert!(close(theoretical_variance(OracleKind::Hm, LN3, 4).unwrap(), 4.0));
        assert!(theoretical_variance(OracleKind::Hr, 0.0, 4).is_err());
        for kind in [OracleKind::De, OracleKind::Sue, OracleKind::Oue, OracleKind::Blh, OracleKind::Hr] {
            for eps in [0.5, 1.0, 3.0] {
                let p = oracle_params(kind, eps, 64, &OracleOptions::default()).unwrap();
                let rel = p.q_variance() / p.theoretical_variance() - 1.0;
                assert!(rel.abs() < 1e-9, "{kind} eps={eps}: {rel}");
            }
        }
    }

    #[test]
    fn hm_decode_variance_closed_form() {
        for t in 1..=5 {
            for eps in [1.0f64, 3.0] {
                let p = oracle_params(OracleKind::Hm, eps, 64, &OracleOptions::default().with_t(t))
                    .unwrap();
                let e = eps.exp();
                let g = (1u64 << t) as f64;
                let want = (e + g - 1.0).powi(2) / (t as f64 * (e - 1.0).powi(2));
                assert!((p.decode_variance() / want - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let o = OracleOptions::default();
        assert!(oracle_params(OracleKind::De, 0.0, 4, &o).is_err());
        assert!(oracle_params(OracleKind::De, -1.0, 4, &o).is_err());
        assert!(oracle_params(OracleKind::De, 1.0, 1, &o).is_err());
        assert!(oracle_params(OracleKind::Oue, 1.0, MAX_UNARY_DOMAIN + 1, &o).is_err());
        assert!(oracle_params(OracleKind::Hm, 1.0, 8, &o.clone().with_t(0)).is_err());
    }

    #[test]
    fn purity_invariant() {
        for kind in OracleKind::ALL {
            for eps in [0.1, 0.5, LN3, 2.0, 5.0] {
                let p = oracle_params(kind, eps, 37, &OracleOptions::default().with_k_prime(5))
                    .unwrap();
                assert!(p.q_star() > 0.0 && p.q_star() < p.p_star() && p.p_star() <= 1.0);
                assert!(p.p_star() / p.q_star() <= eps.exp() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn parses_kinds() {
        for k in OracleKind::ALL {
            assert_eq!(k.name().to_lowercase().parse::<OracleKind>().unwrap(), k);
        }
        assert!("xyz".parse::<OracleKind>().is_err());
    }
}
