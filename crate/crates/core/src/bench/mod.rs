//! Experiment harness: data generation, metrics and CSV output.

pub mod data;
pub mod figures;
pub mod metrics;

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hashing::{derive_seed, Rng};
use crate::heavy_hitters::{aggregate_clients, build_protocol, true_top, HHConfig, Protocol};
use crate::oracles::{hm_optimal_t, OracleKind};
use crate::postprocess::{post_process, EstimateVector, PostMethod};
use crate::stack::{self, Stack, StackSpec, StackState};

pub use data::{gen_zipf, ingest_items, ingest_strings, zipf_strings, Dataset, StringDataset, Zipf};
pub use metrics::{k_mse, mean_sd, mse, precision_recall_f1, top_k, Metrics};

/// Heavy-hitter part of an experiment. `config.eps` and `config.stack` are
/// replaced by the experiment's own values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HHExperiment {
    pub protocol: Protocol,
    pub config: HHConfig,
    /// Distinct words in the synthetic population.
    pub distinct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub stack: StackSpec,
    pub hh: Option<HHExperiment>,
    pub post: PostMethod,
    pub eps: f64,
    pub d: u64,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    /// Top-k for k-MSE, capped at `d`. Heavy-hitter runs score against the
    /// true top `T`.
    pub k: usize,
    pub zipf_s: f64,
    /// Data file instead of synthetic Zipf data.
    pub input: Option<PathBuf>,
    /// Record wall-clock timings. Off by default so output is reproducible.
    pub timings: bool,
}

impl ExperimentConfig {
    pub fn new(stack: StackSpec, eps: f64, d: u64, n: usize) -> Self {
        Self {
            stack,
            hh: None,
            post: PostMethod::None,
            eps,
            d,
            n,
            trials: 5,
            seed: 0,
            k: 50,
            zipf_s: 1.1,
            input: None,
            timings: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.n == 0 && self.input.is_none() {
            return Err(invalid("n must be at least 1"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.zipf_s > 0.0) {
            return Err(invalid(format!("Zipf exponent must be positive, got {}", self.zipf_s)));
        }
        match &self.hh {
            Some(h) => {
                self.hh_config(h).validate()?;
                if h.distinct == 0 && self.input.is_none() {
                    return Err(invalid("need at least one distinct word"));
                }
            }
            None => {
                if self.k == 0 {
                    return Err(invalid("k must be at least 1"));
                }
                // Catches bad oracle or sketch settings before any work.
                self.stack.build(self.eps, self.d, 0)?;
            }
        }
        Ok(())
    }

    fn hh_config(&self, h: &HHExperiment) -> HHConfig {
        HHConfig {
            eps: self.eps,
            stack: self.stack.clone(),
            ..h.config.clone()
        }
    }

    pub fn describe(&self) -> String {
        match &self.hh {
            Some(h) => format!("{}/{}", h.protocol, self.stack.describe()),
            None => self.stack.describe(),
        }
    }
}

/// One CSV line. Empty cells mean "not applicable".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub trial: String,
    pub stack: String,
    pub eps: f64,
    pub d: u64,
    pub n: usize,
    pub r: Option<usize>,
    pub c: Option<usize>,
    pub k_prime: Option<u64>,
    pub t: Option<u32>,
    #[serde(rename = "T")]
    pub top_t: Option<usize>,
    pub post: PostMethod,
    pub mse: Option<f64>,
    pub k_mse: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub time_client_ms: f64,
    pub time_server_ms: f64,
    pub mse_sd: Option<f64>,
    pub f1_sd: Option<f64>,
}

struct Trial {
    n: usize,
    metrics: Metrics,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Like [`stack::run_stack`], also returning summed encode and aggregate
/// time across workers.
fn run_timed(stack: &Stack, items: &[u64], seed: u64) -> Result<(StackState, Duration, Duration)> {
    use rayon::prelude::*;
    let parts: Vec<(StackState, Duration, Duration)> = items
        .par_chunks(stack::CHUNK)
        .enumerate()
        .map(|(i, part)| {
            let mut state = stack.new_state();
            let (mut enc, mut agg) = (Duration::ZERO, Duration::ZERO);
            for (j, &x) in part.iter().enumerate() {
                let mut rng = Rng::for_user(seed, (i * stack::CHUNK + j) as u64);
                let t0 = Instant::now();
                let rep = stack.encode(x, &mut rng)?;
                let t1 = Instant::now();
                state.add(&rep)?;
                agg += t1.elapsed();
                enc += t1 - t0;
            }
            Ok((state, enc, agg))
        })
        .collect::<Result<_>>()?;
    let mut state = stack.new_state();
    let (mut enc, mut agg) = (Duration::ZERO, Duration::ZERO);
    for (s, e, a) in parts {
        let t0 = Instant::now();
        state.merge(&s)?;
        agg += a + t0.elapsed();
        enc += e;
    }
    Ok((state, enc, agg))
}

fn frequency_trial(cfg: &ExperimentConfig, trial_seed: u64) -> Result<Trial> {
    let data = match &cfg.input {
        Some(p) => ingest_items(p, cfg.d)?,
        None => gen_zipf(cfg.n, cfg.d, cfg.zipf_s, derive_seed(trial_seed, 0))?,
    };
    let stack = cfg.stack.build(cfg.eps, cfg.d, derive_seed(trial_seed, 1))?;
    let (state, client, agg) = run_timed(&stack, &data.items, derive_seed(trial_seed, 2))?;
    let t0 = Instant::now();
    let raw = stack.estimator(&state)?.estimate_all(cfg.d)?;
    let server = agg + t0.elapsed();
    let n = data.n();
    let est = post_process(&EstimateVector::new(raw, n as f64), cfg.post)?.values;
    let truth: Vec<f64> = data.true_freqs.iter().map(|&c| c as f64).collect();
    Ok(Trial {
        n,
        metrics: Metrics {
            mse: mse(&est, &truth)?,
            k_mse: k_mse(&est, &truth, cfg.k.min(truth.len()))?,
            time_client_ms: ms(client),
            time_server_ms: ms(server),
            ..Metrics::default()
        },
    })
}

fn hh_trial(cfg: &ExperimentConfig, h: &HHExperiment, trial_seed: u64) -> Result<Trial> {
    let hc = cfg.hh_config(h);
    let data = match &cfg.input {
        Some(p) => ingest_strings(p, hc.max_len, &hc.alphabet)?,
        None => zipf_strings(cfg.n, h.distinct, hc.max_len, &hc.alphabet, cfg.zipf_s, derive_seed(trial_seed, 0))?,
    };
    let proto = build_protocol(h.protocol, &hc, derive_seed(trial_seed, 1))?;
    let t0 = Instant::now();
    let states = aggregate_clients(proto.as_ref(), &data.items, derive_seed(trial_seed, 2), false)?;
    let client = t0.elapsed();
    let t1 = Instant::now();
    let res = proto.decode(&states)?;
    let server = t1.elapsed();
    let truth = true_top(&data.items, hc.max_len, hc.top_t);
    let want: Vec<&str> = truth.iter().map(|(s, _)| s.as_str()).collect();
    let (precision, recall, f1) = precision_recall_f1(&res.strings(), &want);
    let found: std::collections::BTreeMap<&str, f64> =
        res.discovered.iter().map(|(s, e)| (s.as_str(), *e)).collect();
    let k_mse = truth
        .iter()
        .map(|(s, c)| (found.get(s.as_str()).copied().unwrap_or(0.0) - *c as f64).powi(2))
        .sum::<f64>()
        / truth.len().max(1) as f64;
    Ok(Trial {
        n: data.n(),
        metrics: Metrics {
            k_mse,
            precision,
            recall,
            f1,
            time_client_ms: ms(client),
            time_server_ms: ms(server),
            ..Metrics::default()
        },
    })
}

fn template(cfg: &ExperimentConfig) -> Row {
    let sketch = cfg.stack.sketch.as_ref();
    let opts = &cfg.stack.opts;
    Row {
        trial: String::new(),
        stack: cfg.describe(),
        eps: cfg.eps,
        d: match &cfg.hh {
            Some(h) => cfg.hh_config(h).domain(h.config.max_len),
            None => cfg.d,
        },
        n: cfg.n,
        r: sketch.map(|s| s.r),
        c: sketch.map(|s| s.c),
        k_prime: (cfg.stack.oracle == OracleKind::Flh).then_some(opts.k_prime).flatten(),
        t: (cfg.stack.oracle == OracleKind::Hm).then(|| opts.t.unwrap_or_else(|| hm_optimal_t(cfg.eps))),
        top_t: cfg.hh.as_ref().map(|h| h.config.top_t),
        post: cfg.post,
        mse: None,
        k_mse: None,
        precision: None,
        recall: None,
        f1: None,
        time_client_ms: 0.0,
        time_server_ms: 0.0,
        mse_sd: None,
        f1_sd: None,
    }
}

/// One row per trial plus a final `mean` row. Trial `i` derives all its
/// randomness from `derive_seed(seed, i)`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    use rayon::prelude::*;
    cfg.validate()?;
    let run = |i: usize| -> Result<Trial> {
        let seed = derive_seed(cfg.seed, i as u64);
        match &cfg.hh {
            Some(h) => hh_trial(cfg, h, seed),
            None => frequency_trial(cfg, seed),
        }
    };
    // Timed trials run one at a time so they do not compete for cores.
    let trials: Vec<Trial> = if cfg.timings {
        (0..cfg.trials).map(run).collect::<Result<_>>()?
    } else {
        (0..cfg.trials).into_par_iter().map(run).collect::<Result<_>>()?
    };
    let base = template(cfg);
    let is_hh = cfg.hh.is_some();
    let row = |trial: String, n: usize, m: &Metrics| Row {
        trial,
        n,
        mse: (!is_hh).then_some(m.mse),
        k_mse: Some(m.k_mse),
        precision: is_hh.then_some(m.precision),
        recall: is_hh.then_some(m.recall),
        f1: is_hh.then_some(m.f1),
        time_client_ms: if cfg.timings { m.time_client_ms } else { 0.0 },
        time_server_ms: if cfg.timings { m.time_server_ms } else { 0.0 },
        ..base.clone()
    };
    let mut rows: Vec<Row> = trials
        .iter()
        .enumerate()
        .map(|(i, t)| row(i.to_string(), t.n, &t.metrics))
        .collect();
    let col = |f: fn(&Metrics) -> f64| trials.iter().map(|t| f(&t.metrics)).collect::<Vec<f64>>();
    let (mse_mean, mse_sd) = mean_sd(&col(|m| m.mse));
    let (f1_mean, f1_sd) = mean_sd(&col(|m| m.f1));
    let mean = Metrics {
        mse: mse_mean,
        k_mse: mean_sd(&col(|m| m.k_mse)).0,
        precision: mean_sd(&col(|m| m.precision)).0,
        recall: mean_sd(&col(|m| m.recall)).0,
        f1: f1_mean,
        time_client_ms: mean_sd(&col(|m| m.time_client_ms)).0,
        time_server_ms: mean_sd(&col(|m| m.time_server_ms)).0,
    };
    let mean_n = trials.iter().map(|t| t.n).sum::<usize>() / trials.len();
    let mut last = row("mean".into(), mean_n, &mean);
    if is_hh {
        last.f1_sd = Some(f1_sd);
    } else {
        last.mse_sd = Some(mse_sd);
        let rse = mse_sd / (cfg.trials as f64).sqrt() / mse_mean;
        if cfg.trials > 1 && mse_mean > 0.0 && rse > 0.25 {
            log::warn!(
                "{}: relative standard error of MSE is {:.0}% over {} trials",
                cfg.describe(),
                rse * 100.0,
                cfg.trials
            );
        }
    }
    rows.push(last);
    Ok(rows)
}

/// Run several experiments back to back.
pub fn run_sweep(configs: &[ExperimentConfig]) -> Result<Vec<Row>> {
    for c in configs {
        c.validate()?;
    }
    let mut rows = Vec::new();
    for c in configs {
        rows.extend(run_experiment(c)?);
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

pub const CSV_HEADER: [&str; 20] = [
    "trial",
    "stack",
    "eps",
    "d",
    "n",
    "r",
    "c",
    "k_prime",
    "t",
    "T",
    "post",
    "mse",
    "k_mse",
    "precision",
    "recall",
    "f1",
    "time_client_ms",
    "time_server_ms",
    "mse_sd",
    "f1_sd",
];

/// The `mean` row of each experiment in a sweep.
pub fn mean_rows(rows: &[Row]) -> Vec<&Row> {
    rows.iter().filter(|r| r.trial == "mean").collect()
}
