use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::geometry::{iou, Haog};
use crate::model::{HaogHead, HaogPrediction, Model, Session};

/// Held-out accuracy plus graph metrics (absent for models without graph
/// heads).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub top1: f64,
    pub videos: usize,
    pub mean_iou: Option<f64>,
    pub exist_acc: Option<f64>,
    pub contact_acc: Option<f64>,
    pub images: usize,
}

/// Fraction of positions where `pred == truth`.
pub fn top1(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::EmptySplit);
    }
    Ok(pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64)
}

/// Running totals of graph metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HaogTally {
    iou_sum: f64,
    present: usize,
    exist_hits: usize,
    slots: usize,
    contact_hits: usize,
    edges: usize,
    pub images: usize,
}

impl HaogTally {
    /// Adds one image: IoU over present slots, existence at probability
    /// 0.5, contact argmax on edges whose endpoints both exist.
    pub fn add(&mut self, pred: &HaogPrediction, truth: &Haog) {
        self.images += 1;
        for i in 0..4 {
            if truth.exists[i] {
                self.iou_sum += iou(&pred.boxes[i], &truth.boxes[i]);
                self.present += 1;
            }
            self.exist_hits += ((pred.exist_prob(i) >= 0.5) == truth.exists[i]) as usize;
            self.slots += 1;
        }
        for j in 0..2 {
            if truth.edge_defined(j) {
                self.contact_hits += ((pred.contact_prob(j) >= 0.5) == truth.contacts[j]) as usize;
                self.edges += 1;
            }
        }
    }

    pub fn mean_iou(&self) -> Option<f64> {
        (self.present > 0).then(|| self.iou_sum / self.present as f64)
    }

    pub fn exist_acc(&self) -> Option<f64> {
        (self.slots > 0).then(|| self.exist_hits as f64 / self.slots as f64)
    }

    pub fn contact_acc(&self) -> Option<f64> {
        (self.edges > 0).then(|| self.contact_hits as f64 / self.edges as f64)
    }
}

/// A prediction that reproduces `truth` exactly; saturated logits.
pub fn oracle_prediction(truth: &Haog) -> HaogPrediction {
    let logit = |b: bool| if b { 50.0 } else { -50.0 };
    HaogPrediction {
        boxes: truth.boxes,
        exist_logits: truth.exists.map(logit),
        contact_logits: truth.contacts.map(|c| if c { [-50.0, 50.0] } else { [50.0, -50.0] }),
    }
}

/// Predicted class of one clip.
pub fn predict_label(model: &Model, sample: &Sample) -> Result<usize> {
    let mut s = Session::frozen(model);
    let enc = s.forward_clip(&sample.frames)?;
    let logits = s.clip_logits(&enc)?;
    let z = s.tape.value(logits).data();
    Ok(z.iter().enumerate().fold(0, |best, (k, v)| if *v > z[best] { k } else { best }))
}

/// Graph prediction for frame `frame` of `sample` processed as an image.
pub fn predict_graph(model: &Model, sample: &Sample, frame: usize) -> Result<HaogPrediction> {
    let mut s = Session::frozen(model);
    let enc = s.forward_image(&sample.frames.frame(frame))?;
    let heads = s.image_haog(&enc)?;
    Ok(HaogPrediction::from_heads(&s.tape, &heads))
}

/// Single-clip top-1 on `samples` and graph metrics on every
/// `frame_stride`-th frame of each.
pub fn evaluate(model: &Model, samples: &[Sample], frame_stride: usize) -> Result<Metrics> {
    if samples.is_empty() {
        return Err(Error::EmptySplit);
    }
    let pred = samples.iter().map(|s| predict_label(model, s)).collect::<Result<Vec<_>>>()?;
    let truth: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let mut m = Metrics { top1: top1(&pred, &truth)?, videos: samples.len(), ..Metrics::default() };
    if model.config().haog_head != HaogHead::None {
        let mut tally = HaogTally::default();
        for s in samples {
            for t in (0..s.haogs.len()).step_by(frame_stride.max(1)) {
                tally.add(&predict_graph(model, s, t)?, &s.haogs[t]);
            }
        }
        m.mean_iou = tally.mean_iou();
        m.exist_acc = tally.exist_acc();
        m.contact_acc = tally.contact_acc();
        m.images = tally.images;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_sample, WorldConfig};

    #[test]
    fn leaked_labels_are_perfect() {
        let labels = [0, 3, 5, 1, 1];
        assert_eq!(top1(&labels, &labels).unwrap(), 1.0);
        assert!(top1(&[], &[]).is_err());
    }

    #[test]
    fn ground_truth_scores_perfectly() {
        let mut tally = HaogTally::default();
        for seed in 0..20 {
            let s = generate_sample(&WorldConfig::default(), (seed % 6) as usize, 0, seed).unwrap();
            for g in &s.haogs {
                tally.add(&oracle_prediction(g), g);
            }
        }
        assert_eq!(tally.mean_iou(), Some(1.0));
        assert_eq!(tally.exist_acc(), Some(1.0));
        assert_eq!(tally.contact_acc(), Some(1.0));
    }
}
