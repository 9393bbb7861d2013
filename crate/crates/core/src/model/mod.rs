//! Shared video & image transformer with object tokens.
//!
//! Frames are patchified with one 2-D projection, so an image is processed
//! exactly like a one-frame clip. Per frame `t`, `n` object tokens start from
//! `o_i + r_t`, where `r_t` is the same temporal embedding added to that
//! frame's patch tokens. The sequence is frame-major with patches before
//! objects inside each frame, and all `T * (H * W + n)` tokens attend to each
//! other in every block.

mod config;
mod forward;
mod params;

pub use config::{FrameTime, HaogHead, ModelConfig};
pub use forward::{Clip, HaogHeads, HaogPrediction, Session, TokenBatch, TokenLayout};
pub use params::{Model, Param, ParamGroup};
