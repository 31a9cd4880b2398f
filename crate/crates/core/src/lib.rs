//! Robust federated inference over client probit vectors.
//!
//! The crate covers static robust averaging rules with a margin-based
//! certificate, a permutation-invariant DeepSet aggregator and its
//! adversarial training loop, a six-attack evaluation suite, and a
//! simulation harness reporting clean, per-attack and worst-case accuracy.

pub mod aggregators;
pub mod attacks;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod simplex;
pub mod training;

pub use error::{Error, Result};
