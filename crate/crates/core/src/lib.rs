//! Cross-domain recommendation engine built around dual training of two
//! per-domain neural recommenders coupled by an orthogonal mapping between
//! their user-embedding spaces, plus an experiment harness that exercises
//! the whole pipeline on synthetic coupled-domain data.

pub mod data;
pub mod dual;
pub mod embed;
pub mod error;
pub mod fileio;
pub mod harness;
pub mod mapping;
pub mod metrics;
pub mod mlp;
pub mod nmf;
pub mod recsys;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
