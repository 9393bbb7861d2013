//! Training objectives: video cross-entropy, graph node and edge losses,
//! frame-clip consistency and their weighted total.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Haog;
use crate::model::HaogHeads;
use crate::numerics::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub con: f64,
    pub haog: f64,
    pub vid: f64,
    /// Node-internal weights of the L1, existence BCE and GIoU terms.
    pub l1: f64,
    pub bce: f64,
    pub giou: f64,
    /// Include contact edges in the graph loss.
    pub edges: bool,
    /// Block gradients into the frame branch of the consistency loss.
    pub stop_grad_frames: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { con: 2.0, haog: 2.0, vid: 1.0, l1: 5.0, bce: 1.0, giou: 2.0, edges: true, stop_grad_frames: false }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.con, self.haog, self.vid, self.l1, self.bce, self.giou];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(alloc::format!("loss weights must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// Per-step scalar components plus diagnostic counts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub vid: f64,
    pub nodes: f64,
    pub edges: f64,
    pub haog: f64,
    pub con: f64,
    pub total: f64,
    pub present_objects: usize,
    pub contact_positives: usize,
}

/// Cross-entropy of clip logits `[1, K]` against `label`.
pub fn video_loss(tape: &mut Tape, logits: Var, label: usize) -> Result<Var> {
    tape.cross_entropy(logits, &[label])
}

/// Existence BCE on every slot plus existence-gated GIoU and L1 box terms.
pub fn node_loss(tape: &mut Tape, pred: &HaogHeads, gt: &Haog, w: &LossWeights) -> Result<Var> {
    gt.validate()?;
    let exist: Vec<f64> = gt.exists.iter().map(|e| if *e { 1.0 } else { 0.0 }).collect();
    let bce = tape.bce_with_logits(pred.exist, &exist, &[w.bce; 4])?;
    let targets: Vec<[f64; 4]> = gt.boxes.iter().map(|b| b.coords()).collect();
    let gated: Vec<f64> = exist.iter().map(|e| e * w.giou).collect();
    let giou = tape.giou_loss(pred.boxes, &targets, &gated)?;
    let flat: Vec<f64> = targets.iter().flatten().copied().collect();
    let gated: Vec<f64> = exist.iter().map(|e| e * w.l1).collect();
    let l1 = tape.weighted_l1(pred.boxes, &flat, &gated)?;
    let s = tape.add(bce, giou)?;
    tape.add(s, l1)
}

/// Contact cross-entropy summed over the edges whose hand and object both
/// exist; `None` when neither edge is defined.
pub fn edge_loss(tape: &mut Tape, pred: &HaogHeads, gt: &Haog) -> Result<Option<Var>> {
    let defined: Vec<usize> = (0..2).filter(|j| gt.edge_defined(*j)).collect();
    if defined.is_empty() {
        return Ok(None);
    }
    let logits = tape.gather_rows(pred.contact, &defined)?;
    let loss = if tape.value(logits).cols() == 1 {
        let t: Vec<f64> = defined.iter().map(|j| if gt.contacts[*j] { 1.0 } else { 0.0 }).collect();
        let ones = alloc::vec![1.0; t.len()];
        tape.bce_with_logits(logits, &t, &ones)?
    } else {
        let classes: Vec<usize> = defined.iter().map(|j| gt.contacts[*j] as usize).collect();
        tape.cross_entropy(logits, &classes)?
    };
    Ok(Some(loss))
}

/// Node and edge terms of one annotated image.
#[derive(Clone, Copy, Debug)]
pub struct HaogTerms {
    pub nodes: Var,
    pub edges: Option<Var>,
    pub total: Var,
}

/// `node_loss + edge_loss` (edges omitted when `w.edges` is false).
pub fn haog_loss(tape: &mut Tape, pred: &HaogHeads, gt: &Haog, w: &LossWeights) -> Result<HaogTerms> {
    let nodes = node_loss(tape, pred, gt, w)?;
    let edges = if w.edges { edge_loss(tape, pred, gt)? } else { None };
    let total = match edges {
        Some(e) => tape.add(nodes, e)?,
        None => nodes,
    };
    Ok(HaogTerms { nodes, edges, total })
}

/// Mean absolute difference between clip and frame tokens aligned by
/// position. With `stop_grad_frames` the frame branch is a constant.
pub fn consistency_loss(tape: &mut Tape, clip_tokens: Var, frame_tokens: Var, stop_grad_frames: bool) -> Result<Var> {
    let frames = if stop_grad_frames { tape.detach(frame_tokens) } else { frame_tokens };
    tape.l1_distance(clip_tokens, frames)
}

/// `sum_k weight_k * term_k` over the present terms; `None` if none are.
pub fn weighted_sum(tape: &mut Tape, terms: &[(Option<Var>, f64)]) -> Result<Option<Var>> {
    let mut acc: Option<Var> = None;
    for (term, weight) in terms {
        let Some(t) = term else { continue };
        let s = tape.scale(*t, *weight)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, s)?,
            None => s,
        });
    }
    Ok(acc)
}

/// Weighted total of already-reduced components. Absent streams pass zero.
pub fn total_loss(vid: f64, haog: f64, con: f64, w: &LossWeights) -> Result<LossReport> {
    for (name, v) in [("vid", vid), ("haog", haog), ("con", con)] {
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss { component: name, step: 0 });
        }
    }
    Ok(LossReport { vid, haog, con, total: w.con * con + w.haog * haog + w.vid * vid, ..LossReport::default() })
}

/// Scalar constant on the tape, for terms that are structurally zero.
pub fn zero(tape: &mut Tape) -> Var {
    tape.constant(Tensor::scalar(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn total_is_weighted_sum() {
        let r = total_loss(1.0, 1.0, 1.0, &LossWeights::default()).unwrap();
        assert_eq!(r.total, 5.0);
        let w = LossWeights { con: 0.0, ..LossWeights::default() };
        assert_eq!(total_loss(0.7, 0.2, 9.0, &w).unwrap().total, 0.7 + 2.0 * 0.2);
    }

    #[test]
    fn total_is_linear_in_haog_weight() {
        let w1 = LossWeights::default();
        let w2 = LossWeights { haog: 4.0, ..w1.clone() };
        let a = total_loss(0.3, 0.5, 0.1, &w1).unwrap().total;
        let b = total_loss(0.3, 0.5, 0.1, &w2).unwrap().total;
        assert_abs_diff_eq!(b - a, 2.0 * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn total_rejects_non_finite() {
        let e = total_loss(f64::NAN, 0.0, 0.0, &LossWeights::default()).unwrap_err();
        assert_eq!(e, Error::NonFiniteLoss { component: "vid", step: 0 });
    }

    #[test]
    fn negative_weights_rejected() {
        assert!(LossWeights { haog: -1.0, ..LossWeights::default() }.validate().is_err());
    }
}
