//! Minimal neural-network engine for the DeepSet aggregator: two-layer
//! perceptrons, softmax head, cross-entropy and Carlini-Wagner losses,
//! reverse-mode gradients for parameters and inputs, and Adam.

mod adam;
pub mod checkpoint;
mod deepset;
mod loss;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use deepset::{Architecture, DeepSetGrads, DeepSetModel, DeepSetTape, LossKind, Pooling};
pub use loss::{cross_entropy, cw_loss, softmax_backward, PROB_FLOOR};
pub use mlp::{Mlp2, Mlp2Tape};
