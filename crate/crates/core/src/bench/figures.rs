//! Named sweep presets.
//!
//! Desk scale uses `n = 10^5`; `full` raises it to `10^6` and the sketch
//! sweeps from `d = 10^4` to `d = 10^5`.

use super::{ExperimentConfig, HHExperiment};
use crate::error::{invalid, Result};
use crate::heavy_hitters::{HHConfig, Protocol};
use crate::oracles::{OracleKind, OracleOptions};
use crate::postprocess::PostMethod;
use crate::sketch::{Combine, SketchKind};
use crate::stack::{SketchSpec, StackSpec};

pub const FIGURES: [&str; 8] = ["1b", "2", "3a", "4", "6", "7", "8", "hh-table"];

fn plain(kind: OracleKind) -> StackSpec {
    StackSpec::oracle(kind, OracleOptions::default())
}

fn flh(k_prime: u64) -> StackSpec {
    StackSpec::oracle(OracleKind::Flh, OracleOptions::default().with_k_prime(k_prime))
}

/// Every experiment of preset `name`, all with seed 0 and five trials.
pub fn figure(name: &str, full: bool) -> Result<Vec<ExperimentConfig>> {
    let n = if full { 1_000_000 } else { 100_000 };
    let sketch_d = if full { 100_000 } else { 10_000 };
    let mut out = Vec::new();
    match name {
        // DE against the unary encodings as d grows.
        "1b" => {
            for log_d in 2..=11 {
                for kind in [OracleKind::De, OracleKind::Sue, OracleKind::Oue] {
                    out.push(ExperimentConfig::new(plain(kind), 3.0, 1 << log_d, n));
                }
            }
        }
        // FLH against OLH at a small domain.
        "2" => {
            out.push(ExperimentConfig::new(plain(OracleKind::Olh), 3.0, 500, n));
            out.push(ExperimentConfig::new(flh(10_000), 3.0, 500, n));
        }
        // HM over t.
        "3a" => {
            for eps in [1.0, 3.0] {
                for t in 1..=5 {
                    let spec = StackSpec::oracle(OracleKind::Hm, OracleOptions::default().with_t(t));
                    out.push(ExperimentConfig::new(spec, eps, 1024, n));
                }
            }
        }
        "4" => {
            for eps in [1.0, 3.0] {
                for kind in [OracleKind::Oue, OracleKind::Olh, OracleKind::Blh, OracleKind::Hr] {
                    out.push(ExperimentConfig::new(plain(kind), eps, 1024, n));
                }
            }
        }
        // Bloom filter ridge penalty.
        "6" => {
            for alpha in [5e-4, 5e-3, 5e-2, 0.5] {
                let sketch = SketchSpec {
                    cohorts: 8,
                    alpha,
                    ..SketchSpec::new(SketchKind::Bloom, 2, 128)
                };
                out.push(ExperimentConfig::new(plain(OracleKind::De).with_sketch(sketch), 3.0, sketch_d, n));
            }
        }
        // Count-Min rows against k-MSE.
        "7" => {
            for combine in [Combine::Min, Combine::Median] {
                for r in [4, 8, 16, 32, 64, 128] {
                    let spec = flh(500).with_sketch(SketchSpec::count_min(r, 1024, combine));
                    out.push(ExperimentConfig::new(spec, 3.0, sketch_d, n));
                }
            }
        }
        // Post-processing on FLH.
        "8" => {
            for post in PostMethod::ALL {
                let mut c = ExperimentConfig::new(flh(10_000), 3.0, sketch_d, n);
                c.post = post;
                out.push(c);
            }
        }
        "hh-table" => {
            let stack = flh(500).with_sketch(SketchSpec::count_min(32, 1024, Combine::Median));
            for protocol in [Protocol::Pem, Protocol::Sfp, Protocol::Th] {
                let mut c = ExperimentConfig::new(stack.clone(), 3.0, 0, n);
                c.hh = Some(HHExperiment {
                    protocol,
                    config: HHConfig::new(3.0, stack.clone()),
                    distinct: 200,
                });
                out.push(c);
            }
        }
        _ => {
            return Err(invalid(format!(
                "unknown figure {name:?}; expected one of {}",
                FIGURES.join(", ")
            )))
        }
    }
    Ok(out)
}
