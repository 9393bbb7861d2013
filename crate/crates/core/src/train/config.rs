use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::data::{ImageSource, WorldConfig};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::{HaogHead, ModelConfig};

/// Which token set the consistency loss aligns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyTarget {
    Objects,
    Patches,
}

/// AdamW step with decoupled weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    /// Peak step size, reached at the end of warmup.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `0` disables.
    pub clip_norm: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4, clip_norm: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub world: WorldConfig,
    pub optim: OptimConfig,
    pub steps: usize,
    pub warmup_steps: usize,
    pub video_bs: usize,
    pub image_bs: usize,
    pub image_source: ImageSource,
    pub consistency: ConsistencyTarget,
    /// Replace every image annotation with a uniformly random graph.
    pub random_haog: bool,
    /// Episodes per (verb, noun) pair in the train and test splits.
    pub train_per_pair: usize,
    pub test_per_pair: usize,
    /// Episodes of the other-domain image world, when that source is used.
    pub other_domain_samples: usize,
    pub seed: u64,
    pub variant: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            loss: LossWeights::default(),
            world: WorldConfig::default(),
            optim: OptimConfig::default(),
            steps: 2000,
            warmup_steps: 100,
            video_bs: 8,
            image_bs: 8,
            image_source: ImageSource::InDomain,
            consistency: ConsistencyTarget::Objects,
            random_haog: false,
            train_per_pair: 20,
            test_per_pair: 10,
            other_domain_samples: 200,
            seed: 0,
            variant: "full".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.world.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.steps <= self.warmup_steps {
            return bad(format!("steps {} must exceed warmup {}", self.steps, self.warmup_steps));
        }
        if self.video_bs == 0 && self.image_bs == 0 {
            return bad("both batch sizes are zero".into());
        }
        let m = &self.model;
        if self.world.canvas != m.height || self.world.canvas != m.width || self.world.frames != m.frames {
            return bad(format!(
                "world {}px x {} frames does not match model {}x{} x {}",
                self.world.canvas, self.world.frames, m.height, m.width, m.frames
            ));
        }
        if self.world.verbs != m.classes || self.world.channels != m.channels {
            return bad(format!("{} verbs but {} classes", self.world.verbs, m.classes));
        }
        if self.uses_images() && m.haog_head == HaogHead::None {
            return bad("image stream needs graph heads".into());
        }
        if self.loss.con > 0.0 && self.video_bs > 0 && self.consistency == ConsistencyTarget::Objects && m.objects == 0 {
            return bad("object consistency needs object tokens".into());
        }
        let o = &self.optim;
        if !(o.lr > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0) {
            return bad(format!("invalid optimizer settings {o:?}"));
        }
        if self.train_per_pair == 0 || self.test_per_pair == 0 {
            return bad("splits need at least one episode per pair".into());
        }
        Ok(())
    }

    /// Whether a step draws annotated images.
    pub fn uses_images(&self) -> bool {
        self.image_bs > 0 && self.image_source != ImageSource::None && self.loss.haog > 0.0
    }

    /// Whether a step runs the frame-decomposed pass.
    pub fn uses_consistency(&self) -> bool {
        self.video_bs > 0 && self.loss.con > 0.0
    }

    /// Step size at `step`: linear warmup to the peak, then a half-period
    /// cosine from the peak down to zero at `steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let peak = self.optim.lr;
        if step < self.warmup_steps {
            return peak * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = (self.steps - self.warmup_steps) as f64;
        let k = (step - self.warmup_steps) as f64 / span;
        0.5 * peak * (1.0 + crate::math::cos(core::f64::consts::PI * k.min(1.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn schedule_shape() {
        let c = TrainConfig { steps: 100, warmup_steps: 10, ..TrainConfig::default() };
        assert_eq!(c.lr_at(9), c.optim.lr);
        assert_eq!(c.lr_at(10), c.optim.lr);
        assert!(c.lr_at(0) < c.lr_at(5));
        let tail: alloc::vec::Vec<f64> = (10..100).map(|s| c.lr_at(s)).collect();
        assert!(tail.windows(2).all(|w| w[1] <= w[0]));
        assert!(c.lr_at(99) < 1e-3 * c.optim.lr);
    }

    #[test]
    fn mismatched_world_rejected() {
        let mut c = TrainConfig::default();
        c.world.canvas = 16;
        assert!(c.validate().is_err());
        let c = TrainConfig { steps: 10, warmup_steps: 10, ..TrainConfig::default() };
        assert!(c.validate().is_err());
    }
}
