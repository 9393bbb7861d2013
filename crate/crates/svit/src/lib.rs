//! File formats, training runs, the ablation matrix and SVG inspection on
//! top of `svit-core`. The `svit` binary exposes all of it on the command
//! line.

pub mod annotations;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod inspect;
pub mod report;
pub mod run;

pub use error::{Error, Result};
