use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::{FrameTime, HaogHead};
use super::params::Model;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::math;
use crate::numerics::{Tape, Tensor, Var};

/// Pixel data `[frames, height, width, channels]`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Clip {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * height * width * channels || frames == 0 {
            return Err(Error::Shape {
                op: "clip",
                lhs: vec![frames, height, width, channels],
                rhs: vec![data.len()],
            });
        }
        Ok(Self { frames, height, width, channels, data })
    }

    pub fn zeros(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Self { frames, height, width, channels, data: vec![0.0; frames * height * width * channels] }
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Frame `t` as a one-frame clip (an image).
    pub fn frame(&self, t: usize) -> Clip {
        let n = self.frame_len();
        Clip { frames: 1, data: self.data[t * n..(t + 1) * n].to_vec(), ..*self }
    }

    pub fn frame_data(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn pixel(&self, t: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[((t * self.height + y) * self.width + x) * self.channels + c]
    }
}

/// Position bookkeeping for a frame-major token sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenLayout {
    pub frames: usize,
    pub patches: usize,
    pub objects: usize,
}

impl TokenLayout {
    pub fn per_frame(&self) -> usize {
        self.patches + self.objects
    }

    pub fn len(&self) -> usize {
        self.frames * self.per_frame()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch_position(&self, t: usize, p: usize) -> usize {
        t * self.per_frame() + p
    }

    pub fn object_position(&self, t: usize, i: usize) -> usize {
        t * self.per_frame() + self.patches + i
    }

    /// All patch positions, frame-major.
    pub fn patch_positions(&self) -> Vec<usize> {
        (0..self.frames).flat_map(|t| (0..self.patches).map(move |p| self.patch_position(t, p))).collect()
    }

    /// All object positions, frame-major then slot order.
    pub fn object_positions(&self) -> Vec<usize> {
        (0..self.frames).flat_map(|t| (0..self.objects).map(move |i| self.object_position(t, i))).collect()
    }
}

/// One token sequence (a clip or an image) on a tape.
#[derive(Clone, Copy, Debug)]
pub struct TokenBatch {
    pub tokens: Var,
    pub layout: TokenLayout,
}

/// Graph head outputs on the tape.
#[derive(Clone, Copy, Debug)]
pub struct HaogHeads {
    /// `[4 x 4]`, sigmoid-activated `(cx, cy, w, h)`.
    pub boxes: Var,
    /// `[4 x 1]` existence logits.
    pub exist: Var,
    /// `[2 x c]` contact logits; row `j` pairs hand `j` with object `j + 2`.
    pub contact: Var,
}

/// Graph head outputs as plain values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HaogPrediction {
    pub boxes: [BBox; 4],
    pub exist_logits: [f64; 4],
    /// `[no contact, contact]` logits; a single-logit head is stored as `[0, z]`.
    pub contact_logits: [[f64; 2]; 2],
}

impl HaogPrediction {
    pub fn from_heads(tape: &Tape, heads: &HaogHeads) -> Self {
        let b = tape.value(heads.boxes).data();
        let e = tape.value(heads.exist).data();
        let c = tape.value(heads.contact);
        let row = |j: usize| match c.cols() {
            1 => [0.0, c.row(j)[0]],
            _ => [c.row(j)[0], c.row(j)[1]],
        };
        Self {
            boxes: core::array::from_fn(|i| BBox::predicted([b[4 * i], b[4 * i + 1], b[4 * i + 2], b[4 * i + 3]])),
            exist_logits: [e[0], e[1], e[2], e[3]],
            contact_logits: [row(0), row(1)],
        }
    }

    pub fn exist_prob(&self, i: usize) -> f64 {
        math::sigmoid(self.exist_logits[i])
    }

    pub fn contact_prob(&self, j: usize) -> f64 {
        let [a, b] = self.contact_logits[j];
        math::sigmoid(b - a)
    }
}

/// A model's parameters bound onto a fresh tape.
pub struct Session<'m> {
    model: &'m Model,
    pub tape: Tape,
    params: Vec<Var>,
}

impl<'m> Session<'m> {
    /// Parameters as differentiable leaves.
    pub fn new(model: &'m Model) -> Self {
        let mut tape = Tape::new();
        let params = model.params().iter().map(|p| tape.leaf(p.value.clone())).collect();
        Self { model, tape, params }
    }

    /// Parameters as constants; nothing is differentiable.
    pub fn frozen(model: &'m Model) -> Self {
        let mut tape = Tape::new();
        let params = model.params().iter().map(|p| tape.constant(p.value.clone())).collect();
        Self { model, tape, params }
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }

    pub fn param_vars(&self) -> &[Var] {
        &self.params
    }

    fn p(&self, idx: usize) -> Var {
        self.params[idx]
    }

    /// Backward from `loss`; one gradient per model parameter, zero where
    /// the loss does not reach.
    pub fn gradients(&self, loss: Var) -> Result<Vec<Tensor>> {
        let grads = self.tape.backward(loss)?;
        Ok(self.params.iter().map(|v| grads.get_or_zero(*v)).collect())
    }

    /// Non-overlapping `P x P x C` patches projected by the shared weight,
    /// plus spatial and temporal embeddings. `times[t]` selects the temporal
    /// embedding of frame `t`. Output `[frames * H * W, d]`, frame-major.
    pub fn patchify(&mut self, clip: &Clip, times: &[usize]) -> Result<Var> {
        let cfg = self.model.config();
        if clip.height != cfg.height || clip.width != cfg.width || clip.channels != cfg.channels {
            return Err(Error::Shape {
                op: "patchify",
                lhs: vec![clip.height, clip.width, clip.channels],
                rhs: vec![cfg.height, cfg.width, cfg.channels],
            });
        }
        if times.len() != clip.frames || times.iter().any(|t| *t >= cfg.frames) {
            return Err(Error::Index { index: clip.frames, extent: cfg.frames });
        }
        let (ps, gh, gw, c) = (cfg.patch_size, cfg.grid_h(), cfg.grid_w(), cfg.channels);
        let dim = cfg.patch_dim();
        let rows = clip.frames * gh * gw;
        let mut patches = Vec::with_capacity(rows * dim);
        for t in 0..clip.frames {
            for py in 0..gh {
                for px in 0..gw {
                    for y in 0..ps {
                        let start = ((t * clip.height + py * ps + y) * clip.width + px * ps) * c;
                        patches.extend_from_slice(&clip.data[start..start + ps * c]);
                    }
                }
            }
        }
        let l = &self.model.layout;
        let x = self.tape.constant(Tensor::new(vec![rows, dim], patches)?);
        let x = self.tape.linear(x, self.p(l.patch_w), self.p(l.patch_b))?;
        let hw = gh * gw;
        let spatial_idx: Vec<usize> = (0..rows).map(|r| r % hw).collect();
        let temporal_idx: Vec<usize> = (0..rows).map(|r| times[r / hw]).collect();
        let sp = self.tape.gather_rows(self.p(l.spatial), &spatial_idx)?;
        let tm = self.tape.gather_rows(self.p(l.temporal), &temporal_idx)?;
        let x = self.tape.add(x, sp)?;
        self.tape.add(x, tm)
    }

    /// Appends `n` object tokens `o_i + r_t` to every frame and orders the
    /// sequence frame-major, patches first.
    pub fn assemble(&mut self, patches: Var, times: &[usize]) -> Result<TokenBatch> {
        let cfg = self.model.config();
        let layout = TokenLayout { frames: times.len(), patches: cfg.patches_per_frame(), objects: cfg.objects };
        if self.tape.shape(patches)[0] != layout.frames * layout.patches {
            return Err(Error::Shape {
                op: "assemble",
                lhs: self.tape.shape(patches).to_vec(),
                rhs: vec![layout.frames * layout.patches],
            });
        }
        let Some(prompts) = self.model.layout.prompts else {
            return Ok(TokenBatch { tokens: patches, layout });
        };
        let n = layout.objects;
        let slot_idx: Vec<usize> = (0..layout.frames * n).map(|k| k % n).collect();
        let time_idx: Vec<usize> = (0..layout.frames * n).map(|k| times[k / n]).collect();
        let o = self.tape.gather_rows(self.p(prompts), &slot_idx)?;
        let r = self.tape.gather_rows(self.p(self.model.layout.temporal), &time_idx)?;
        let objects = self.tape.add(o, r)?;
        let stacked = self.tape.concat_rows(&[patches, objects])?;
        // stacked rows: all patches (frame-major) then all objects (frame-major)
        let patch_rows = layout.frames * layout.patches;
        let mut order = Vec::with_capacity(layout.len());
        for t in 0..layout.frames {
            order.extend((0..layout.patches).map(|p| t * layout.patches + p));
            order.extend((0..n).map(|i| patch_rows + t * n + i));
        }
        let tokens = self.tape.gather_rows(stacked, &order)?;
        Ok(TokenBatch { tokens, layout })
    }

    /// Pre-norm transformer blocks with full joint space-time attention.
    pub fn encode(&mut self, batch: TokenBatch) -> Result<TokenBatch> {
        let cfg = self.model.config();
        let (heads, eps) = (cfg.heads, cfg.ln_eps);
        let d = cfg.d_model;
        // key bias is omitted: it shifts every logit of a query equally
        let mut spread = vec![0.0; 2 * d * 3 * d];
        for i in 0..d {
            spread[i * 3 * d + i] = 1.0;
            spread[(d + i) * 3 * d + 2 * d + i] = 1.0;
        }
        let spread = self.tape.constant(Tensor::new(vec![2 * d, 3 * d], spread)?);
        let mut x = batch.tokens;
        for b in &self.model.layout.blocks {
            let h = self.tape.layer_norm(x, self.p(b.ln1_g), self.p(b.ln1_b), eps)?;
            let bias = self.tape.matmul(self.p(b.qkv_b), spread)?;
            let qkv = self.tape.linear(h, self.p(b.qkv_w), bias)?;
            let a = self.tape.attention(qkv, heads)?;
            let a = self.tape.linear(a, self.p(b.out_w), self.p(b.out_b))?;
            x = self.tape.add(x, a)?;
            let h = self.tape.layer_norm(x, self.p(b.ln2_g), self.p(b.ln2_b), eps)?;
            let h = self.tape.linear(h, self.p(b.fc1_w), self.p(b.fc1_b))?;
            let h = self.tape.gelu(h)?;
            let h = self.tape.linear(h, self.p(b.fc2_w), self.p(b.fc2_b))?;
            x = self.tape.add(x, h)?;
        }
        Ok(TokenBatch { tokens: x, layout: batch.layout })
    }

    /// Patchify, assemble and encode a clip with its true frame indices.
    pub fn forward_clip(&mut self, clip: &Clip) -> Result<TokenBatch> {
        let times: Vec<usize> = (0..clip.frames).collect();
        let x = self.patchify(clip, &times)?;
        let batch = self.assemble(x, &times)?;
        self.encode(batch)
    }

    /// Image path: a single frame with the first temporal embedding.
    pub fn forward_image(&mut self, image: &Clip) -> Result<TokenBatch> {
        if image.frames != 1 {
            return Err(Error::Shape { op: "forward_image", lhs: vec![image.frames], rhs: vec![1] });
        }
        self.forward_clip(image)
    }

    /// Every frame of `clip` processed on its own, as the consistency loss
    /// requires.
    pub fn forward_frames(&mut self, clip: &Clip) -> Result<Vec<TokenBatch>> {
        (0..clip.frames)
            .map(|t| {
                let time = match self.model.config().frame_time {
                    FrameTime::First => 0,
                    FrameTime::ClipIndex => t,
                };
                let frame = clip.frame(t);
                let x = self.patchify(&frame, &[time])?;
                let batch = self.assemble(x, &[time])?;
                self.encode(batch)
            })
            .collect()
    }

    /// Object-token outputs, `[frames * n, d]` in (frame, slot) order.
    pub fn f_o(&mut self, encoded: &TokenBatch) -> Result<Var> {
        if encoded.layout.objects == 0 {
            return Err(Error::Config("model has no object tokens".into()));
        }
        self.tape.gather_rows(encoded.tokens, &encoded.layout.object_positions())
    }

    /// Patch-token outputs, `[frames * H * W, d]`.
    pub fn f_patches(&mut self, encoded: &TokenBatch) -> Result<Var> {
        if encoded.layout.objects == 0 {
            return Ok(encoded.tokens);
        }
        self.tape.gather_rows(encoded.tokens, &encoded.layout.patch_positions())
    }

    /// Mean of all patch-token outputs, `[1, d]`; object tokens excluded.
    pub fn f_cls(&mut self, encoded: &TokenBatch) -> Result<Var> {
        let p = self.f_patches(encoded)?;
        self.tape.mean(p, 0)
    }

    /// Box, existence and contact heads over four slot vectors `[4, d]`.
    pub fn predict_haog(&mut self, slots: Var) -> Result<HaogHeads> {
        let g = self.model.layout.graph.clone().ok_or(Error::Config("model has no graph heads".into()))?;
        let shape = self.tape.shape(slots);
        if shape.len() != 2 || shape[0] != 4 {
            return Err(Error::Shape { op: "predict_haog", lhs: shape.to_vec(), rhs: vec![4, self.model.config().d_model] });
        }
        let raw = self.tape.linear(slots, self.p(g.bb_w), self.p(g.bb_b))?;
        let boxes = self.tape.sigmoid(raw)?;
        let exist = self.tape.linear(slots, self.p(g.exist_w), self.p(g.exist_b))?;
        let hands = self.tape.gather_rows(slots, &[0, 1])?;
        let objects = self.tape.gather_rows(slots, &[2, 3])?;
        let pairs = self.tape.concat_cols(&[hands, objects])?;
        let contact = self.tape.linear(pairs, self.p(g.contact_w), self.p(g.contact_b))?;
        Ok(HaogHeads { boxes, exist, contact })
    }

    /// Graph prediction for an encoded image, from whichever source the
    /// configuration prescribes.
    pub fn image_haog(&mut self, encoded: &TokenBatch) -> Result<HaogHeads> {
        match self.model.config().haog_head {
            HaogHead::None => Err(Error::Config("model has no graph heads".into())),
            HaogHead::ObjectTokens => {
                let o = self.f_o(encoded)?;
                self.predict_haog(o)
            }
            HaogHead::Pooled => {
                let cls = self.f_cls(encoded)?;
                let (w, b) = self.model.layout.graph.as_ref().and_then(|g| g.slots).expect("pooled head has slots");
                let s = self.tape.linear(cls, self.p(w), self.p(b))?;
                let d = self.model.config().d_model;
                let s = self.tape.reshape(s, &[4, d])?;
                self.predict_haog(s)
            }
        }
    }

    /// Single linear layer, `[1, K]` logits.
    pub fn classify(&mut self, cls: Var) -> Result<Var> {
        let l = &self.model.layout;
        let (w, b) = (self.p(l.cls_w), self.p(l.cls_b));
        self.tape.linear(cls, w, b)
    }

    /// Clip logits, `[1, K]`.
    pub fn clip_logits(&mut self, encoded: &TokenBatch) -> Result<Var> {
        let cls = self.f_cls(encoded)?;
        self.classify(cls)
    }
}
