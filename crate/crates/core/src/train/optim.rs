use alloc::vec;
use alloc::vec::Vec;

use super::config::OptimConfig;
use crate::error::{Error, Result};
use crate::math;
use crate::model::Model;
use crate::numerics::Tensor;

/// Adam moments for every model parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    cfg: OptimConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(cfg: OptimConfig, model: &Model) -> Self {
        let zeros: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self { cfg, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Global L2 norm of a gradient set.
    pub fn grad_norm(grads: &[Tensor]) -> f64 {
        math::sqrt(grads.iter().flat_map(|g| g.data()).map(|x| x * x).sum())
    }

    /// One bias-corrected Adam step at step size `lr`; weight decay is
    /// decoupled and applied only to parameters flagged for it.
    pub fn update(&mut self, model: &mut Model, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::Index { index: grads.len(), extent: self.m.len() });
        }
        let norm = Self::grad_norm(grads);
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        let scale = if self.cfg.clip_norm > 0.0 && norm > self.cfg.clip_norm { self.cfg.clip_norm / norm } else { 1.0 };
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - pow(b1, self.t);
        let c2 = 1.0 - pow(b2, self.t);
        for (k, param) in model.params_mut().iter_mut().enumerate() {
            let decay = if param.decay { self.cfg.weight_decay } else { 0.0 };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, w) in param.value.data_mut().iter_mut().enumerate() {
                let g = grads[k].data()[i] * scale;
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let step = (m[i] / c1) / (math::sqrt(v[i] / c2) + self.cfg.eps);
                *w -= lr * (step + decay * *w);
            }
        }
        Ok(())
    }
}

fn pow(base: f64, exp: u64) -> f64 {
    let mut acc = 1.0;
    let (mut b, mut e) = (base, exp);
    while e > 0 {
        if e & 1 == 1 {
            acc *= b;
        }
        b *= b;
        e >>= 1;
    }
    acc
}
