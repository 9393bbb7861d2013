//! Shared video & image transformer with learned object tokens.
//!
//! The crate is `no_std` (with `alloc`) and carries everything that is pure
//! computation: a reverse-mode tensor tape, box geometry, the transformer and
//! its heads, every training objective, the synthetic hand-object world and
//! the single-step training/evaluation logic. File formats, the command line
//! and the ablation runner live in the `svit` crate.
#![no_std]
#![forbid(unsafe_op_in_unsafe_fn)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod geometry;
pub mod losses;
pub(crate) mod math;
pub mod model;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
