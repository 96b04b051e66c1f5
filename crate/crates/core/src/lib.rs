//! Growing a trained transformer into a wider and deeper one.
//!
//! The crate is `no_std` (with `alloc`) and holds the whole algorithmic
//! side of the toolkit:
//!
//! - [`numerics`]: dense row-major `f32` kernels and a seeded RNG.
//! - [`transformer`]: a post-LN encoder (MLM) and pre-LN decoder (causal LM)
//!   with a hand-written backward pass.
//! - [`expansion`]: mapping functions, the `EXPN` operator, function-preserving
//!   and advanced-knowledge width expansion, depth stacking and baselines.
//! - [`training`]: corpora, masking, Adam with warmup, the two-stage
//!   sub-model schedule and loss logging.
//!
//! File formats and the command-line front end live in the `growformer`
//! crate.

#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod expansion;
pub mod numerics;
pub mod training;
pub mod transformer;

pub use error::{Error, Result};
pub use numerics::{Matrix, SeededRng};
pub use transformer::{Batch, ModelConfig, ParamSet, Variant};
