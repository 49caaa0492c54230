//! Randomized positional encodings for encoder-only transformers, plus the
//! algorithmic-reasoning benchmark, training harness, and diagnostics needed
//! to measure their length-generalization benefit.
//!
//! The crate is organized along the pipeline:
//!
//! - [`nn`]: dense tensors with reverse-mode differentiation, Adam, gradient
//!   clipping, and the checkpoint format.
//! - [`tasks`]: generators and brute-force oracles for the 15 algorithmic
//!   reasoning tasks (grouped by Chomsky level).
//! - [`encodings`]: the six positional-encoding schemes and their randomized
//!   variants (per-batch sorted subsampling of positions from `1..=L`).
//! - [`model`]: the encoder-only transformer with per-scheme injection points
//!   and padded-output decoding.
//! - [`harness`]: training loop with the `U(1..=N)` length curriculum,
//!   per-length evaluation, aggregation, throughput measurement, ablations.
//! - [`analysis`]: PCA of layer activations across length regimes and
//!   max-over-heads attention summaries.
//! - [`selfcheck`]: the oracle and invariant suites behind `lengthgen selfcheck`.

pub mod analysis;
pub mod encodings;
pub mod harness;
pub mod model;
pub mod nn;
pub mod rng;
pub mod selfcheck;
pub mod tasks;

pub use encodings::{BaseEncoding, EncodingScheme, PositionAssignment};
pub use model::{Batch, ModelConfig};
pub use nn::{AdamState, ParameterStore, Real, Tape, Tensor};
pub use tasks::{TaskId, TaskInstance, TaskSpec};
