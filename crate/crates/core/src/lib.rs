//! Neural active learning with an exploitation network, an exploration
//! network over its end-to-end embedding, and diagnostics built on the
//! neural tangent kernel.
//!
//! * [`nn`]: dense ReLU networks with exact backpropagation and SGD.
//! * [`pair`]: the `f1`/`f2` predictor pair and its online learner.
//! * [`stream`]: stream-based selective sampling with the `β_t` gap rule.
//! * [`pool`]: pool-based selection by inverse gap weighting, plus the
//!   uniform-draw stream conversion.
//! * [`ntk`]: kernel matrix, complexity terms and a finite-width oracle.
//! * [`data`]: datasets, loss vectors and synthetic generators.
//! * [`harness`]: experiment configuration, baselines, metrics and records.

pub mod data;
pub mod error;
pub mod harness;
pub mod nn;
pub mod ntk;
pub mod pair;
pub mod pool;
pub mod stream;

pub use error::{Error, ErrorCategory, Result};
