//! Finite-difference check of every loss component against reverse-mode
//! gradients through the whole model.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::{BBox, Haog};
use crate::losses::{consistency_loss, edge_loss, node_loss, video_loss, weighted_sum, LossWeights};
use crate::model::{Clip, Model, ModelConfig, ParamGroup, Session};
use crate::model::HaogHeads;
use crate::numerics::{grad_check_many, relative_error_floored, Tape, Tensor, Var};

/// Denominator floor of the whole-model comparison. Parameters whose true
/// gradient is exactly zero (a bias that shifts clip and frame tokens alike
/// under the consistency loss) still see one ulp of loss change, which
/// central differences turn into about `1.1e-12`; the floor keeps such
/// coordinates from reading as a relative error.
pub const FD_FLOOR: f64 = 1e-7;

pub const LOSS_NAMES: [&str; 5] = ["vid", "nodes", "edges", "con", "total"];

/// Worst relative error of one loss, overall and per parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckRow {
    pub loss: &'static str,
    pub max_rel_error: f64,
    pub by_group: Vec<(ParamGroup, f64)>,
    pub coordinates: usize,
}

/// The small instance the check runs on: `d = 8`, two blocks, two frames
/// of `2 x 2` patches, four object tokens.
pub fn grad_check_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        depth: 2,
        heads: 2,
        mlp_ratio: 2,
        patch_size: 2,
        frames: 2,
        height: 4,
        width: 4,
        channels: 3,
        objects: 4,
        classes: 3,
        ..ModelConfig::default()
    }
}

struct Inputs {
    clip: Clip,
    label: usize,
    graph: Haog,
}

fn inputs(cfg: &ModelConfig, seed: u64) -> Inputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.frames * cfg.height * cfg.width * cfg.channels;
    let data = (0..n).map(|_| rng.random::<f64>()).collect();
    let clip = Clip::new(cfg.frames, cfg.height, cfg.width, cfg.channels, data).expect("sized");
    let mut graph = Haog::empty();
    for i in 0..4 {
        let (w, h) = (rng.random_range(0.1..0.5), rng.random_range(0.1..0.5));
        graph.boxes[i] = BBox { cx: rng.random_range(0.25..0.75), cy: rng.random_range(0.25..0.75), w, h };
        graph.exists[i] = i != 2 || rng.random_bool(0.5);
    }
    graph.contacts = [graph.edge_defined(0) && rng.random_bool(0.5), true];
    Inputs { clip, label: rng.random_range(0..cfg.classes), graph }
}

/// Value of loss `which` (and its gradients when the session is
/// differentiable) for the fixed inputs.
fn loss_on(s: &mut Session<'_>, x: &Inputs, which: &str, w: &LossWeights) -> Result<crate::numerics::Var> {
    let enc = s.forward_clip(&x.clip)?;
    let logits = s.clip_logits(&enc)?;
    let vid = video_loss(&mut s.tape, logits, x.label)?;
    let frames = s.forward_frames(&x.clip)?;
    let clip_tokens = s.f_o(&enc)?;
    let per_frame = frames.iter().map(|f| s.f_o(f)).collect::<Result<Vec<_>>>()?;
    let frame_tokens = s.tape.concat_rows(&per_frame)?;
    let con = consistency_loss(&mut s.tape, clip_tokens, frame_tokens, w.stop_grad_frames)?;
    let image = x.clip.frame(1);
    let enc = s.forward_image(&image)?;
    let heads = s.image_haog(&enc)?;
    let nodes = node_loss(&mut s.tape, &heads, &x.graph, w)?;
    let edges = edge_loss(&mut s.tape, &heads, &x.graph)?.expect("right edge is defined");
    let haog = s.tape.add(nodes, edges)?;
    Ok(match which {
        "vid" => vid,
        "nodes" => nodes,
        "edges" => edges,
        "con" => con,
        _ => weighted_sum(&mut s.tape, &[(Some(vid), w.vid), (Some(haog), w.haog), (Some(con), w.con)])?.expect("terms"),
    })
}

/// Checks every coordinate of every parameter for each loss component.
/// Parameters are redrawn with unit-scale noise so that no subgraph is
/// switched off by the zero initialisation of output projections.
pub fn full_model_grad_check(seed: u64, eps: f64) -> Result<Vec<GradCheckRow>> {
    let mut model = Model::new(grad_check_config(), seed)?;
    model.randomize(seed, 0.3);
    let x = inputs(model.config(), seed ^ 0x9c);
    let w = LossWeights::default();
    let mut rows = Vec::new();
    for which in LOSS_NAMES {
        let grads = {
            let mut s = Session::new(&model);
            let loss = loss_on(&mut s, &x, which, &w)?;
            s.gradients(loss)?
        };
        let mut row = GradCheckRow { loss: which, max_rel_error: 0.0, by_group: Vec::new(), coordinates: 0 };
        let mut probe = model.clone();
        for (k, g) in grads.iter().enumerate() {
            let group = model.params()[k].group;
            for i in 0..g.len() {
                let orig = model.params()[k].value.data()[i];
                let mut eval = |delta: f64| -> Result<f64> {
                    probe.params_mut()[k].value.data_mut()[i] = orig + delta;
                    let mut s = Session::frozen(&probe);
                    let l = loss_on(&mut s, &x, which, &w)?;
                    Ok(s.tape.value(l).item())
                };
                let numeric = (eval(eps)? - eval(-eps)?) / (2.0 * eps);
                probe.params_mut()[k].value.data_mut()[i] = orig;
                let err = relative_error_floored(g.data()[i], numeric, FD_FLOOR);
                row.max_rel_error = row.max_rel_error.max(err);
                row.coordinates += 1;
                match row.by_group.iter_mut().find(|(gr, _)| *gr == group) {
                    Some((_, e)) => *e = e.max(err),
                    None => row.by_group.push((group, err)),
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Checks each loss against differences in its direct inputs (logits,
/// head outputs, token matrices) rather than the model parameters.
pub fn loss_grad_check(seed: u64, eps: f64) -> Result<Vec<GradCheckRow>> {
    let cfg = grad_check_config();
    let x = inputs(&cfg, seed);
    let w = LossWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51);
    let mut random = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).expect("sized")
    };
    let heads = |t: &mut Tape, v: &[Var]| -> Result<HaogHeads> {
        Ok(HaogHeads { boxes: t.sigmoid(v[0])?, exist: v[1], contact: v[2] })
    };
    let head_inputs = [random(&[4, 4]), random(&[4, 1]), random(&[2, 2])];
    let token_inputs = [random(&[8, 8]), random(&[8, 8])];
    let logits = [random(&[1, cfg.classes])];
    let mut rows = Vec::new();
    for which in LOSS_NAMES {
        let worst = match which {
            "vid" => grad_check_many(|t, v| video_loss(t, v[0], x.label), &logits, eps)?,
            "nodes" => grad_check_many(|t, v| { let h = heads(t, v)?; node_loss(t, &h, &x.graph, &w) }, &head_inputs, eps)?,
            "edges" => grad_check_many(
                |t, v| { let h = heads(t, v)?; Ok(edge_loss(t, &h, &x.graph)?.expect("right edge is defined")) },
                &head_inputs,
                eps,
            )?,
            "con" => grad_check_many(|t, v| consistency_loss(t, v[0], v[1], false), &token_inputs, eps)?,
            _ => {
                let mut all = head_inputs.to_vec();
                all.extend(token_inputs.iter().cloned());
                all.extend(logits.iter().cloned());
                grad_check_many(
                    |t, v| {
                        let h = heads(t, v)?;
                        let nodes = node_loss(t, &h, &x.graph, &w)?;
                        let edges = edge_loss(t, &h, &x.graph)?.expect("right edge is defined");
                        let haog = t.add(nodes, edges)?;
                        let con = consistency_loss(t, v[3], v[4], false)?;
                        let vid = video_loss(t, v[5], x.label)?;
                        Ok(weighted_sum(t, &[(Some(vid), w.vid), (Some(haog), w.haog), (Some(con), w.con)])?.expect("terms"))
                    },
                    &all,
                    eps,
                )?
            }
        };
        let len = |ts: &[Tensor]| ts.iter().map(Tensor::len).sum::<usize>();
        let coordinates = match which {
            "vid" => len(&logits),
            "con" => len(&token_inputs),
            "nodes" | "edges" => len(&head_inputs),
            _ => len(&head_inputs) + len(&token_inputs) + len(&logits),
        };
        rows.push(GradCheckRow { loss: which, max_rel_error: worst.iter().fold(0.0, |a, b| a.max(*b)), by_group: Vec::new(), coordinates });
    }
    Ok(rows)
}
