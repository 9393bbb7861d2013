use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the hand-object graph is predicted from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaogHead {
    /// No graph heads at all.
    None,
    /// One head application per object token.
    ObjectTokens,
    /// Object-free multi-task model: the pooled patch vector is mapped to
    /// `4` pseudo-slot vectors which feed the same heads.
    Pooled,
}

/// Temporal embedding used when a single frame is processed on its own.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameTime {
    /// Always `r_1`, the embedding of the first frame.
    First,
    /// The frame's index inside its clip (images still use `r_1`).
    ClipIndex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Patch side in pixels.
    pub patch_size: usize,
    /// Maximum clip length; one temporal embedding per frame.
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Object tokens per frame; `0` disables them.
    pub objects: usize,
    pub classes: usize,
    pub haog_head: HaogHead,
    /// `2` for a softmax over {no contact, contact}, `1` for a single BCE logit.
    pub contact_logits: usize,
    pub frame_time: FrameTime,
    pub ln_eps: f64,
    /// Standard deviation of the truncated-normal initialisation.
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            depth: 4,
            heads: 4,
            mlp_ratio: 4,
            patch_size: 8,
            frames: 8,
            height: 32,
            width: 32,
            channels: 3,
            objects: 4,
            classes: 6,
            haog_head: HaogHead::ObjectTokens,
            contact_logits: 2,
            frame_time: FrameTime::First,
            ln_eps: 1e-6,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn grid_h(&self) -> usize {
        self.height / self.patch_size
    }

    pub fn grid_w(&self) -> usize {
        self.width / self.patch_size
    }

    /// Patch tokens per frame (`H * W` in grid units).
    pub fn patches_per_frame(&self) -> usize {
        self.grid_h() * self.grid_w()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    /// Sequence length of a clip with `frames` frames.
    pub fn sequence_len(&self, frames: usize) -> usize {
        frames * (self.patches_per_frame() + self.objects)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.patch_size == 0 || self.height % self.patch_size != 0 || self.width % self.patch_size != 0 {
            return fail(format!(
                "frame {}x{} not divisible by patch size {}",
                self.height, self.width, self.patch_size
            ));
        }
        if self.height == 0 || self.width == 0 || self.channels == 0 || self.frames == 0 {
            return fail(format!("empty frame geometry {self:?}"));
        }
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return fail(format!("d_model {} not divisible by heads {}", self.d_model, self.heads));
        }
        if self.classes < 2 || self.mlp_ratio == 0 {
            return fail(format!("need at least two classes and a non-empty MLP, got {self:?}"));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite() && self.ln_eps > 0.0) {
            return fail(format!("init_std {} / ln_eps {} must be positive", self.init_std, self.ln_eps));
        }
        if !matches!(self.contact_logits, 1 | 2) {
            return fail(format!("contact_logits must be 1 or 2, got {}", self.contact_logits));
        }
        match self.haog_head {
            HaogHead::ObjectTokens if self.objects != 4 => {
                fail(format!("graph heads need exactly 4 object tokens, got {}", self.objects))
            }
            _ => Ok(()),
        }
    }

    /// Closed-form parameter count.
    ///
    /// With `d = d_model`, `m = mlp_ratio`, `p = patch_dim`, `g = H * W`:
    ///
    /// ```text
    /// embed  = p d + d + g d + T d + n d
    /// block  = (4 + 2m) d^2 + (8 + m) d     (no key bias)
    /// graph  = 4d + 4 + d + 1 + 2d c + c      (c = contact logits)
    /// pooled = 4 d^2 + 4 d                     (pooled graph head only)
    /// class  = d K + K
    /// ```
    pub fn parameter_count(&self) -> usize {
        let d = self.d_model;
        let m = self.mlp_ratio;
        let embed = self.patch_dim() * d + d + self.patches_per_frame() * d + self.frames * d + self.objects * d;
        let block = (4 + 2 * m) * d * d + (8 + m) * d;
        let c = self.contact_logits;
        let graph = 4 * d + 4 + d + 1 + 2 * d * c + c;
        let heads = match self.haog_head {
            HaogHead::None => 0,
            HaogHead::ObjectTokens => graph,
            HaogHead::Pooled => graph + 4 * d * d + 4 * d,
        };
        embed + self.depth * block + heads + d * self.classes + self.classes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.patches_per_frame(), 16);
        assert_eq!(c.sequence_len(8), 8 * 20);
    }

    #[test]
    fn rejects_bad_geometry() {
        let c = ModelConfig { height: 30, ..ModelConfig::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { heads: 3, ..ModelConfig::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { objects: 3, ..ModelConfig::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { objects: 0, haog_head: HaogHead::Pooled, ..ModelConfig::default() };
        assert!(c.validate().is_ok());
    }
}
