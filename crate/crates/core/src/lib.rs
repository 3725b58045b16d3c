//! Frequency estimation and heavy-hitter discovery under local differential
//! privacy.
//!
//! The crate is layered bottom-up: [`hashing`] and [`hadamard`] provide the
//! primitives, [`oracles`] the eight frequency oracles, [`sketch`] domain
//! reduction on top of any oracle, [`heavy_hitters`] the string-domain search
//! protocols, [`postprocess`] the consistency rules and [`bench`] the
//! experiment harness.

pub mod bench;
pub mod error;
pub mod hadamard;
pub mod hashing;
pub mod heavy_hitters;
pub mod oracles;
pub mod postprocess;
pub mod scalar;
pub mod sketch;
pub mod stack;

pub use error::{Error, Result};
pub use hashing::{derive_seed, HashFamily, Rng};
pub use oracles::{
    aggregate, encode, oracle_params, AggState, OracleKind, OracleOptions, PureParams, Report,
};
pub use postprocess::{post_process, PostMethod};
pub use scalar::Scalar;
pub use stack::{SketchSpec, Stack, StackSpec};

/// Estimates in the scalar type the oracles produce.
pub type Estimates = postprocess::EstimateVector<f64>;
