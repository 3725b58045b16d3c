//! `ldp`: run frequency oracles, sketches, heavy-hitter protocols and
//! benchmark sweeps from the command line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use ldp_core::bench::figures::{figure, FIGURES};
use ldp_core::bench::{run_experiment, run_sweep, write_csv, zipf_strings, ExperimentConfig};
use ldp_core::heavy_hitters::{run_protocol, HHConfig, Protocol};
use ldp_core::oracles::enumerate::max_privacy_ratio;
use ldp_core::sketch::{Combine, SketchKind};
use ldp_core::{OracleKind, OracleOptions, PostMethod, PureParams, SketchSpec, StackSpec};

/// Locally differentially private frequency estimation toolkit.
///
/// Every flag can also be set in a TOML file passed with `--config`, using
/// the flag name as the key (`eps = 2.0`, `d = 512`, `T = 20`,
/// `fragment-len = 3`, `full = true`). Flags on the command line win.
#[derive(Debug, Parser)]
#[command(name = "ldp", version, args_override_self = true)]
struct Cli {
    /// TOML file of default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one frequency oracle end to end and print per-trial metrics.
    Freq {
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Like `freq`, with the domain reduced through a sketch.
    Sketch {
        #[command(flatten)]
        oracle: OracleArgs,
        /// Sketch shape `r,c`, optionally prefixed by its kind: `cm:`, `cs:`
        /// or `bloom:` (for Bloom filters `r` is the number of hashes and
        /// `c` the number of bits).
        #[arg(long, default_value = "cm:32,1024", value_parser = parse_sketch)]
        sketch: SketchSpec,
        /// How per-row estimates are combined: min, mean or median.
        #[arg(long, default_value = "median")]
        combine: Combine,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Discover the top-T strings with SFP, PEM or TH.
    Hh {
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        hh: HhArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Run a named benchmark sweep and write one CSV row per trial.
    Bench {
        /// Preset sweep to run.
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(FIGURES))]
        figure: String,
        /// Run at full scale (n = 10^6, larger sketch domains).
        #[arg(long)]
        full: bool,
        /// Override the preset's number of users.
        #[arg(short = 'n', value_name = "N")]
        n: Option<usize>,
        /// Override the preset's number of trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Record wall-clock timings; timed output is not reproducible.
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Enumerate every output of each oracle and print the largest
    /// probability ratio between two inputs.
    Verify {
        /// Privacy budget.
        #[arg(long, default_value_t = 1.0986)]
        eps: f64,
        /// Domain size (kept small: outputs are enumerated).
        #[arg(short = 'd', default_value_t = 4)]
        d: usize,
        /// Check a single oracle instead of all of them.
        #[arg(long)]
        oracle: Option<OracleKind>,
        /// FLH hash pool size.
        #[arg(long, default_value_t = 4)]
        kprime: u64,
        /// HM coefficients per report [default: ceil(eps)].
        #[arg(short = 't')]
        t: Option<u32>,
    },
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Frequency oracle: de, sue, oue, blh, olh, flh, hm or hr.
    #[arg(long, default_value = "olh")]
    oracle: OracleKind,
    /// Privacy budget.
    #[arg(long, default_value_t = 3.0)]
    eps: f64,
    /// FLH hash pool size (required for flh).
    #[arg(long)]
    kprime: Option<u64>,
    /// HM coefficients per report [default: ceil(eps)].
    #[arg(short = 't')]
    t: Option<u32>,
}

impl OracleArgs {
    fn spec(&self) -> StackSpec {
        let mut opts = OracleOptions::default();
        opts.k_prime = self.kprime;
        opts.t = self.t;
        StackSpec::oracle(self.oracle, opts)
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Domain size.
    #[arg(short = 'd', default_value_t = 1024)]
    d: u64,
    /// Number of users (synthetic Zipf data).
    #[arg(short = 'n', default_value_t = 100_000)]
    n: usize,
    /// Independent trials.
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Post-processing: none, nonneg, additive, simplex or threshold.
    #[arg(long, default_value = "none")]
    post: PostMethod,
    /// Read items (one integer below d per line) instead of generating them.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Record wall-clock timings; timed output is not reproducible.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct HhArgs {
    /// Protocol: sfp, pem or th.
    #[arg(long, default_value = "pem")]
    protocol: Protocol,
    /// Number of heavy hitters to report.
    #[arg(short = 'T', default_value_t = 10)]
    top: usize,
    /// SFP fragment length.
    #[arg(long, default_value_t = 2)]
    fragment_len: usize,
    /// SFP fragment hash tag width in bits.
    #[arg(long, default_value_t = 8)]
    hash_bits: u32,
    /// Maximum string length; longer strings are cut.
    #[arg(long, default_value_t = 6)]
    max_len: usize,
    /// Sketch in front of the oracle, as for `ldp sketch` [default: a
    /// 32x1024 Count-Min sketch for large phases only].
    #[arg(long, value_parser = parse_sketch)]
    sketch: Option<SketchSpec>,
    /// How per-row sketch estimates are combined.
    #[arg(long, default_value = "median")]
    combine: Combine,
    /// Newline-separated strings (URLs are normalized) instead of synthetic
    /// words.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Number of synthetic users.
    #[arg(short = 'n', default_value_t = 100_000)]
    n: usize,
    /// Write every scored candidate of every phase to FILE.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Common {
    /// Master seed; equal seeds give identical output.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV file [default: stdout].
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_sketch(s: &str) -> Result<SketchSpec, String> {
    let (kind, shape) = match s.split_once(':') {
        Some((k, rest)) => (k.parse::<SketchKind>().map_err(|e| e.to_string())?, rest),
        None => (SketchKind::CountMin, s),
    };
    let (r, c) = shape
        .split_once(',')
        .ok_or_else(|| format!("expected r,c, got {shape:?}"))?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("{v:?} is not a count"));
    Ok(SketchSpec::new(kind, num(r)?, num(c)?))
}

/// A config error exits with 2, anything else with 1.
enum Failure {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<ldp_core::Error> for Failure {
    fn from(e: ldp_core::Error) -> Self {
        use ldp_core::Error::*;
        match e {
            InvalidRange(_) | NotPowerOfTwo(_) | InvalidParameter(_) | OutsideAlphabet(_) => {
                Failure::Config(e.to_string())
            }
            e => Failure::Runtime(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome<T = ()> = Result<T, Failure>;

/// `--config FILE` turned into flags inserted right after the subcommand,
/// so that later command-line flags override them.
fn expand_config(args: Vec<String>) -> Outcome<Vec<String>> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = it.next();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Config(format!("{path}: {e}")))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Failure::Config(format!("{path}: {e}")))?;
    let mut flags = Vec::new();
    for (key, value) in table {
        let flag = if key.chars().count() == 1 { format!("-{key}") } else { format!("--{key}") };
        match value {
            toml::Value::Boolean(true) => flags.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::String(s) => flags.extend([flag, s]),
            toml::Value::Integer(i) => flags.extend([flag, i.to_string()]),
            toml::Value::Float(f) => flags.extend([flag, f.to_string()]),
            other => return Err(Failure::Config(format!("{path}: unsupported value for {key}: {other}"))),
        }
    }
    let at = rest
        .iter()
        .position(|a| ["freq", "sketch", "hh", "bench", "verify"].contains(&a.as_str()))
        .map_or(rest.len(), |i| i + 1);
    rest.splice(at..at, flags);
    Ok(rest)
}

fn in_file(p: &Path, e: ldp_core::Error) -> Failure {
    match Failure::from(e) {
        Failure::Runtime(e) => Failure::Runtime(e.context(format!("reading {}", p.display()))),
        f => f,
    }
}

fn output(path: Option<&Path>) -> Outcome<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn set_threads(threads: Option<usize>) -> Outcome {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting the thread pool")?;
    }
    Ok(())
}

fn experiment(stack: StackSpec, oracle: &OracleArgs, data: DataArgs, common: &Common) -> Outcome {
    let mut cfg = ExperimentConfig::new(stack, oracle.eps, data.d, data.n);
    cfg.trials = data.trials;
    cfg.seed = common.seed;
    cfg.post = data.post;
    cfg.input = data.input;
    cfg.timings = data.timings;
    cfg.validate()?;
    let rows = match &cfg.input {
        Some(p) => run_experiment(&cfg).map_err(|e| in_file(p, e))?,
        None => run_experiment(&cfg)?,
    };
    write_csv(&rows, output(common.out.as_deref())?)?;
    Ok(())
}

fn heavy_hitters(oracle: &OracleArgs, hh: HhArgs, common: &Common) -> Outcome {
    let mut stack = oracle.spec();
    if let Some(mut s) = hh.sketch {
        s.combine = hh.combine;
        stack = stack.with_sketch(s);
    }
    let mut cfg = HHConfig::new(oracle.eps, stack);
    cfg.top_t = hh.top;
    cfg.fragment_len = hh.fragment_len;
    cfg.hash_bits = hh.hash_bits;
    cfg.max_len = hh.max_len;
    cfg.trace = hh.trace.is_some();
    cfg.validate()?;
    let data = match &hh.input {
        Some(p) => ldp_core::bench::ingest_strings(p, cfg.max_len, &cfg.alphabet).map_err(|e| in_file(p, e))?,
        None => zipf_strings(hh.n, 200, cfg.max_len, &cfg.alphabet, 1.1, common.seed)?,
    };
    log::info!("{} strings, {} distinct", data.n(), data.histogram.len());
    let res = run_protocol(hh.protocol, &cfg, &data.items, common.seed)?;
    res.write_csv(output(common.out.as_deref())?)?;
    if let Some(p) = &hh.trace {
        res.write_trace(output(Some(p))?)?;
    }
    Ok(())
}

fn verify(eps: f64, d: usize, oracle: Option<OracleKind>, kprime: u64, t: Option<u32>) -> Outcome {
    let mut opts = OracleOptions::default().with_k_prime(kprime);
    opts.t = t;
    let kinds: Vec<OracleKind> = match oracle {
        Some(k) => vec![k],
        None => OracleKind::ALL.to_vec(),
    };
    let bound = eps.exp();
    let mut out = io::stdout().lock();
    writeln!(out, "oracle\tmax_ratio\te^eps").context("writing output")?;
    for kind in kinds {
        let p = PureParams::new(kind, eps, d, &opts)?;
        let ratio = max_privacy_ratio(&p)?;
        writeln!(out, "{}\t{ratio:.6}\t{bound:.6}", p.describe()).context("writing output")?;
        if ratio > bound + 1e-9 {
            log::error!("{} exceeds e^eps", p.describe());
            return Err(Failure::Runtime(anyhow::anyhow!("{} violates {eps}-LDP", p.describe())));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Freq { oracle, data, common } => {
            set_threads(common.threads)?;
            experiment(oracle.spec(), &oracle, data, &common)
        }
        Command::Sketch {
            oracle,
            mut sketch,
            combine,
            data,
            common,
        } => {
            set_threads(common.threads)?;
            sketch.combine = combine;
            experiment(oracle.spec().with_sketch(sketch), &oracle, data, &common)
        }
        Command::Hh { oracle, hh, common } => {
            set_threads(common.threads)?;
            heavy_hitters(&oracle, hh, &common)
        }
        Command::Bench {
            figure: name,
            full,
            n,
            trials,
            timings,
            common,
        } => {
            set_threads(common.threads)?;
            let mut configs = figure(&name, full)?;
            for c in &mut configs {
                c.seed = common.seed;
                c.timings = timings;
                if let Some(n) = n {
                    c.n = n;
                }
                if let Some(t) = trials {
                    c.trials = t;
                }
            }
            let rows = run_sweep(&configs)?;
            write_csv(&rows, output(common.out.as_deref())?)?;
            Ok(())
        }
        Command::Verify { eps, d, oracle, kprime, t } => verify(eps, d, oracle, kprime, t),
    }
}

fn exit_code(r: Outcome) -> ExitCode {
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => return exit_code(Err(e)),
    };
    // Usage errors exit with 2, --help and --version with 0.
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    exit_code(run(cli))
}
