//! Desk-scale laboratory for studying how reinforcement learning shapes the
//! internal representations of a tiny transformer policy.
//!
//! The crate provides, end to end:
//!
//! - a procedurally generated tile maze with wind, tile melting and exact
//!   per-turn rewards ([`maze`]);
//! - a deterministic symbolic prompt codec mapping maze turns to token
//!   sequences ([`codec`]);
//! - a small decoder-only transformer with hand-written reverse-mode
//!   gradients, residual-stream capture and additive steering ([`model`]);
//! - rollout machinery and three trainers (group-relative policy gradient,
//!   token-level REINFORCE, supervised fine-tuning) ([`rollout`], [`train`]);
//! - off-policy synthetic trajectory construction for concept-vector
//!   extraction ([`synth`]);
//! - difference-in-means concept vectors, layer selection, and control
//!   vectors with norm matching ([`vectors`]);
//! - geometric analyses: per-layer cosine reports, centered tile-mean
//!   cosines, logit-lens readout, PCA, and checkpoint-series alignment
//!   ([`geometry`]);
//! - behavioral steering sweeps and projection tracking ([`eval`]);
//! - a file-based run store with config hashing and lineage verification
//!   ([`store`]), exposed through the `mazelab` binary ([`cli`]).
//!
//! Most capabilities also have a runnable demo under `examples/`.

pub mod cli;
pub mod codec;
pub mod eval;
pub mod geometry;
pub mod maze;
pub mod model;
pub mod rng;
pub mod rollout;
pub mod stats;
pub mod store;
pub mod synth;
pub mod train;
pub mod vectors;
