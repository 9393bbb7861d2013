use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ConsistencyTarget, TrainConfig};
use super::optim::AdamW;
use crate::data::{
    generate_sample, mix_seed, randomize_haog, BatchStream, Dataset, Domain, ImageRef, ImageSource, MixedBatch, Sample,
    WorldConfig,
};
use crate::error::{Error, Result};
use crate::losses::{consistency_loss, haog_loss, video_loss, weighted_sum, LossReport};
use crate::model::{Model, Session};
use crate::numerics::{Tape, Var};

const RANDOM_GRAPH_SALT: u64 = 0x7a3d_91c2_44e0_b5f1;
const OTHER_DOMAIN_SALT: u64 = 0x0d0e_1a1f_e0c4_2b27;

/// Episodes a run trains and evaluates on.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainData {
    pub dataset: Dataset,
    /// Other-domain episodes; empty unless that image source is selected.
    pub other: Vec<Sample>,
}

impl TrainData {
    /// Generates the compositional dataset (and the other-domain pool when
    /// needed). Depends only on the world and split sizes, not on the run
    /// seed or variant.
    pub fn generate(cfg: &TrainConfig) -> Result<Self> {
        let dataset = Dataset::generate(&cfg.world, cfg.train_per_pair, cfg.test_per_pair)?;
        let other = if cfg.image_source == ImageSource::OtherDomain {
            let world = WorldConfig { domain: Domain::Other, seed: mix_seed(cfg.world.seed, OTHER_DOMAIN_SALT), ..cfg.world.clone() };
            let mut rng = ChaCha8Rng::seed_from_u64(world.seed);
            (0..cfg.other_domain_samples)
                .map(|_| {
                    let (v, n) = (rng.random_range(0..world.verbs), rng.random_range(0..world.nouns));
                    generate_sample(&world, v, n, rng.random())
                })
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Self { dataset, other })
    }

    /// Samples the image stream draws frames from.
    pub fn image_pool(&self, source: ImageSource) -> &[Sample] {
        match source {
            ImageSource::InDomain => &self.dataset.train,
            ImageSource::OtherDomain => &self.other,
            ImageSource::None => &[],
        }
    }
}

/// Forward passes executed by one step, by kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passes {
    pub clip: usize,
    pub frames: usize,
    pub images: usize,
}

impl Passes {
    pub fn kinds(&self) -> usize {
        (self.clip > 0) as usize + (self.frames > 0) as usize + (self.images > 0) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub lr: f64,
    pub loss: LossReport,
    pub passes: Passes,
}

fn mean(tape: &mut Tape, terms: &[Var]) -> Result<Option<Var>> {
    let Some((&first, rest)) = terms.split_first() else { return Ok(None) };
    let mut acc = first;
    for t in rest {
        acc = tape.add(acc, *t)?;
    }
    Ok(Some(tape.scale(acc, 1.0 / terms.len() as f64)?))
}

fn item(tape: &Tape, v: Option<Var>) -> f64 {
    v.map_or(0.0, |v| tape.value(v).item())
}

/// Random-graph override for image `k` of `step`.
fn random_graph_rng(seed: u64, step: usize, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed ^ RANDOM_GRAPH_SALT, ((step as u64) << 20) | k as u64))
}

/// One combined gradient step on the weighted total: clip pass for the
/// video loss, frame-decomposed pass for consistency, image pass for the
/// graph loss.
pub fn train_step(
    model: &mut Model,
    opt: &mut AdamW,
    cfg: &TrainConfig,
    data: &TrainData,
    batch: &MixedBatch,
    step: usize,
) -> Result<StepReport> {
    let w = &cfg.loss;
    let mut passes = Passes::default();
    let mut report = LossReport::default();
    let lr = cfg.lr_at(step);
    let grads = {
        let mut s = Session::new(model);
        let mut vids = Vec::new();
        let mut cons = Vec::new();
        let consistency = cfg.uses_consistency();
        for &vi in &batch.videos {
            let sample = &data.dataset.train[vi];
            let enc = s.forward_clip(&sample.frames)?;
            let logits = s.clip_logits(&enc)?;
            vids.push(video_loss(&mut s.tape, logits, sample.label)?);
            passes.clip += 1;
            if consistency {
                let frames = s.forward_frames(&sample.frames)?;
                passes.frames += 1;
                let pick = |s: &mut Session<'_>, e| match cfg.consistency {
                    ConsistencyTarget::Objects => s.f_o(e),
                    ConsistencyTarget::Patches => s.f_patches(e),
                };
                let clip_tokens = pick(&mut s, &enc)?;
                let per_frame = frames.iter().map(|f| pick(&mut s, f)).collect::<Result<Vec<_>>>()?;
                let frame_tokens = s.tape.concat_rows(&per_frame)?;
                cons.push(consistency_loss(&mut s.tape, clip_tokens, frame_tokens, w.stop_grad_frames)?);
            }
        }
        let mut totals = Vec::new();
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        if cfg.uses_images() {
            let pool = data.image_pool(cfg.image_source);
            for (k, r) in batch.images.iter().enumerate() {
                let (image, truth) = pool[r.sample].image(r.frame);
                let target = if cfg.random_haog { randomize_haog(&truth, &mut random_graph_rng(cfg.seed, step, k)) } else { truth };
                let enc = s.forward_image(&image)?;
                let heads = s.image_haog(&enc)?;
                let terms = haog_loss(&mut s.tape, &heads, &target, w)?;
                passes.images += 1;
                report.present_objects += target.exists.iter().filter(|e| **e).count();
                report.contact_positives += target.contacts.iter().filter(|c| **c).count();
                totals.push(terms.total);
                nodes.push(terms.nodes);
                if let Some(e) = terms.edges {
                    edges.push(e);
                }
            }
        }
        let vid = mean(&mut s.tape, &vids)?;
        let con = mean(&mut s.tape, &cons)?;
        let haog = mean(&mut s.tape, &totals)?;
        let tape = &mut s.tape;
        report.vid = item(tape, vid);
        report.con = item(tape, con);
        report.haog = item(tape, haog);
        let node_mean = mean(tape, &nodes)?;
        report.nodes = item(tape, node_mean);
        // mean over all images, zero for images without defined edges
        let edge_sum: f64 = edges.iter().map(|e| tape.value(*e).item()).sum();
        report.edges = if totals.is_empty() { 0.0 } else { edge_sum / totals.len() as f64 };
        for (component, v) in [("vid", report.vid), ("con", report.con), ("haog", report.haog)] {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss { component, step: step as u64 });
            }
        }
        let total = weighted_sum(tape, &[(vid, w.vid), (haog, w.haog), (con, w.con)])?
            .ok_or(Error::Config("step has neither videos nor images".into()))?;
        report.total = tape.value(total).item();
        if !report.total.is_finite() {
            return Err(Error::NonFiniteLoss { component: "total", step: step as u64 });
        }
        s.gradients(total)?
    };
    opt.update(model, &grads, lr).map_err(|e| match e {
        Error::NonFinite(_) => Error::NonFiniteLoss { component: "gradient", step: step as u64 },
        other => other,
    })?;
    Ok(StepReport { step, lr, loss: report, passes })
}

/// Model, optimizer and batch stream of one run.
pub struct Trainer<'d> {
    cfg: TrainConfig,
    data: &'d TrainData,
    model: Model,
    opt: AdamW,
    stream: BatchStream,
    step: usize,
}

impl<'d> Trainer<'d> {
    pub fn new(cfg: &TrainConfig, data: &'d TrainData) -> Result<Self> {
        cfg.validate()?;
        let model = Model::new(cfg.model.clone(), cfg.seed)?;
        let images: Vec<ImageRef> = if cfg.uses_images() { Dataset::frames(data.image_pool(cfg.image_source)) } else { Vec::new() };
        let image_bs = if cfg.uses_images() { cfg.image_bs } else { 0 };
        let stream = BatchStream::new(data.dataset.train.len(), images, cfg.video_bs, image_bs, mix_seed(cfg.seed, 0xba7c))?;
        let opt = AdamW::new(cfg.optim.clone(), &model);
        Ok(Self { cfg: cfg.clone(), data, model, opt, stream, step: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let batch = self.stream.next_batch();
        let r = train_step(&mut self.model, &mut self.opt, &self.cfg, self.data, &batch, self.step)?;
        self.step += 1;
        Ok(r)
    }

    /// Runs the remaining steps, handing every report to `on_step`.
    pub fn run(&mut self, mut on_step: impl FnMut(&StepReport)) -> Result<()> {
        while self.step < self.cfg.steps {
            let r = self.step()?;
            on_step(&r);
        }
        Ok(())
    }
}
