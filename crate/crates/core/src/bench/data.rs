//! Synthetic Zipf data and newline-delimited string ingestion.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{invalid, Result};
use crate::hashing::Rng;

/// Items over `[d]` with their exact histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<u64>,
    pub d: u64,
    pub true_freqs: Vec<u64>,
}

impl Dataset {
    pub fn from_items(items: Vec<u64>, d: u64) -> Result<Self> {
        let mut true_freqs = vec![0u64; d as usize];
        for &x in &items {
            *true_freqs
                .get_mut(x as usize)
                .ok_or_else(|| invalid(format!("item {x} outside a domain of {d}")))? += 1;
        }
        Ok(Self { items, d, true_freqs })
    }

    pub fn n(&self) -> usize {
        self.items.len()
    }
}

/// Strings with their exact histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct StringDataset {
    pub items: Vec<String>,
    pub histogram: BTreeMap<String, u64>,
}

impl StringDataset {
    pub fn from_items(items: Vec<String>) -> Self {
        let mut histogram = BTreeMap::new();
        for s in &items {
            *histogram.entry(s.clone()).or_insert(0) += 1;
        }
        Self { items, histogram }
    }

    pub fn n(&self) -> usize {
        self.items.len()
    }
}

/// Cumulative Zipf table: `Pr[rank j] ∝ j^-s` for `j = 1..=d`.
#[derive(Debug, Clone)]
pub struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    pub fn new(d: u64, s: f64) -> Result<Self> {
        if d < 2 {
            return Err(invalid(format!("Zipf needs d >= 2, got {d}")));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(invalid(format!("Zipf exponent must be positive, got {s}")));
        }
        let mut cdf = Vec::with_capacity(d as usize);
        let mut acc = 0.0;
        for j in 1..=d {
            acc += (j as f64).powf(-s);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(Self { cdf })
    }

    /// Item index (rank - 1).
    pub fn sample(&self, rng: &mut Rng) -> u64 {
        let u = rng.unit();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1) as u64
    }

    pub fn probability(&self, x: u64) -> f64 {
        let i = x as usize;
        self.cdf[i] - if i == 0 { 0.0 } else { self.cdf[i - 1] }
    }
}

pub fn gen_zipf(n: usize, d: u64, s: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(invalid("need at least one item"));
    }
    let z = Zipf::new(d, s)?;
    let mut rng = Rng::seed_from(seed);
    let items = (0..n).map(|_| z.sample(&mut rng)).collect();
    Dataset::from_items(items, d)
}

/// `distinct` random words of length `len` over `alphabet`, then `n` draws
/// with Zipf(`s`) popularity over them.
pub fn zipf_strings(n: usize, distinct: usize, len: usize, alphabet: &[char], s: f64, seed: u64) -> Result<StringDataset> {
    if alphabet.is_empty() || len == 0 {
        return Err(invalid("need a non-empty alphabet and positive length"));
    }
    let possible = (alphabet.len() as f64).powi(len as i32);
    if distinct as f64 > possible {
        return Err(invalid(format!("cannot draw {distinct} distinct words of length {len}")));
    }
    let mut rng = Rng::seed_from(seed);
    let mut seen = std::collections::BTreeSet::new();
    let mut words = Vec::with_capacity(distinct);
    while words.len() < distinct {
        let w: String = (0..len)
            .map(|_| alphabet[rng.below(alphabet.len() as u64) as usize])
            .collect();
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    let z = Zipf::new(distinct.max(2) as u64, s)?;
    let items = (0..n)
        .map(|_| words[(z.sample(&mut rng) as usize).min(distinct - 1)].clone())
        .collect();
    Ok(StringDataset::from_items(items))
}

/// Normalize one input line: strip a scheme and `www.`, lowercase, drop
/// characters outside `alphabet`, cut to `max_len`. Empty results are
/// dropped.
pub fn clean_line(line: &str, max_len: usize, alphabet: &[char]) -> Option<String> {
    let mut s = line.trim();
    for prefix in ["https://", "http://"] {
        if s.len() >= prefix.len() && s[..prefix.len()].eq_ignore_ascii_case(prefix) {
            s = &s[prefix.len()..];
            break;
        }
    }
    if s.len() >= 4 && s[..4].eq_ignore_ascii_case("www.") {
        s = &s[4..];
    }
    let out: String = s
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| alphabet.contains(c))
        .take(max_len)
        .collect();
    (!out.is_empty()).then_some(out)
}

pub fn ingest_strings(path: &Path, max_len: usize, alphabet: &[char]) -> Result<StringDataset> {
    let text = std::fs::read_to_string(path)?;
    let items = text
        .lines()
        .filter_map(|l| clean_line(l, max_len, alphabet))
        .collect();
    Ok(StringDataset::from_items(items))
}

/// One non-negative integer per line, each below `d`.
pub fn ingest_items(path: &Path, d: u64) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let x: u64 = line
            .parse()
            .map_err(|_| invalid(format!("line {}: {line:?} is not an item index", i + 1)))?;
        items.push(x);
    }
    Dataset::from_items(items, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn letters() -> Vec<char> {
        ('a'..='z').collect()
    }

    #[test]
    fn zipf_weights() {
        let z = Zipf::new(4, 1.1).unwrap();
        let w: Vec<f64> = (1..=4).map(|j: i32| (j as f64).powf(-1.1)).collect();
        for (a, b) in w.iter().zip([1.0, 0.4665, 0.2988, 0.2176]) {
            // Listed to four places; 3^-1.1 is 0.29865.
            assert!((a - b).abs() < 2e-4);
        }
        let total: f64 = w.iter().sum();
        let ds = gen_zipf(1_000_000, 4, 1.1, 9).unwrap();
        for x in 0..4 {
            let emp = ds.true_freqs[x] as f64 / 1e6;
            assert!((emp - w[x] / total).abs() < 0.005);
            assert!((z.probability(x as u64) - w[x] / total).abs() < 1e-12);
        }
        assert_eq!(ds.true_freqs.iter().sum::<u64>(), 1_000_000);
    }

    #[test]
    fn small_exponent_is_nearly_uniform() {
        let ds = gen_zipf(100_000, 5, 1e-9, 3).unwrap();
        let e = 20_000.0;
        let chi2: f64 = ds.true_freqs.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 4 degrees of freedom, p = 0.001
        assert!(chi2 < 18.47, "{:?}", ds.true_freqs);
    }

    #[test]
    fn deterministic() {
        assert_eq!(gen_zipf(1000, 50, 1.1, 4).unwrap(), gen_zipf(1000, 50, 1.1, 4).unwrap());
        assert_ne!(gen_zipf(1000, 50, 1.1, 4).unwrap(), gen_zipf(1000, 50, 1.1, 5).unwrap());
        assert!(gen_zipf(0, 50, 1.1, 4).is_err());
        assert!(gen_zipf(10, 1, 1.1, 4).is_err());
    }

    #[test]
    fn string_population() {
        let ds = zipf_strings(5000, 20, 6, &letters(), 1.1, 2).unwrap();
        assert_eq!(ds.histogram.len(), 20);
        assert!(ds.items.iter().all(|s| s.len() == 6));
        assert_eq!(ds.histogram.values().sum::<u64>(), 5000);
    }

    #[test]
    fn url_cleaning() {
        let a = letters();
        assert_eq!(clean_line("https://www.Google.com/search", 6, &a).as_deref(), Some("google"));
        assert_eq!(clean_line("a.com", 6, &a).as_deref(), Some("acom"));
        assert_eq!(clean_line("HTTP://WWW.x", 6, &a).as_deref(), Some("x"));
        assert_eq!(clean_line("   ", 6, &a), None);
        assert_eq!(clean_line("http://123", 6, &a), None);
    }

    #[test]
    fn ingest_twice_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("urls.txt");
        std::fs::write(&p, "https://www.google.com\nyahoo.com\n\n42\ngoogle.co.uk\n").unwrap();
        let a = ingest_strings(&p, 6, &letters()).unwrap();
        assert_eq!(a, ingest_strings(&p, 6, &letters()).unwrap());
        assert_eq!(a.histogram["google"], 2);
        assert_eq!(a.n(), 3);
        assert!(ingest_strings(&dir.path().join("missing"), 6, &letters()).is_err());
    }
}
