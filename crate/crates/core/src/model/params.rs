use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{HaogHead, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Coarse grouping used for per-group gradient checks and reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Prompts,
    Embeddings,
    Attention,
    Mlp,
    Heads,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    /// Whether decoupled weight decay applies.
    pub decay: bool,
    pub value: Tensor,
}

#[derive(Clone, Debug)]
pub(crate) struct BlockIds {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub qkv_w: usize,
    pub qkv_b: usize,
    pub out_w: usize,
    pub out_b: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub fc1_w: usize,
    pub fc1_b: usize,
    pub fc2_w: usize,
    pub fc2_b: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct GraphIds {
    pub bb_w: usize,
    pub bb_b: usize,
    pub exist_w: usize,
    pub exist_b: usize,
    pub contact_w: usize,
    pub contact_b: usize,
    /// Pooled-vector to pseudo-slot projection (multi-task head only).
    pub slots: Option<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub patch_w: usize,
    pub patch_b: usize,
    pub spatial: usize,
    pub temporal: usize,
    pub prompts: Option<usize>,
    pub blocks: Vec<BlockIds>,
    pub graph: Option<GraphIds>,
    pub cls_w: usize,
    pub cls_b: usize,
}

/// Configuration plus every named parameter tensor.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: Vec<Param>,
    pub(crate) layout: Layout,
}

enum Init {
    Normal,
    Zeros,
    Ones,
}

fn name_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a, so a parameter's initial value depends only on (seed, name)
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn truncated_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

struct Builder {
    seed: u64,
    std: f64,
    params: Vec<Param>,
}

impl Builder {
    fn add(&mut self, name: String, group: ParamGroup, shape: &[usize], init: Init, decay: bool) -> usize {
        let len = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; len],
            Init::Ones => vec![1.0; len],
            Init::Normal => {
                let mut rng = ChaCha8Rng::seed_from_u64(name_seed(self.seed, &name));
                (0..len).map(|_| truncated_normal(&mut rng, self.std)).collect()
            }
        };
        let value = Tensor::new(shape.to_vec(), data).expect("parameter shapes are positive");
        self.params.push(Param { name, group, decay, value });
        self.params.len() - 1
    }
}

impl Model {
    /// Fresh model. Each tensor is drawn from a stream keyed by its name, so
    /// parameters shared between configurations start identical.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut b = Builder { seed, std: config.init_std, params: Vec::new() };
        use Init::*;
        use ParamGroup::*;
        let patch_w = b.add("patch.weight".into(), Embeddings, &[config.patch_dim(), d], Normal, true);
        let patch_b = b.add("patch.bias".into(), Embeddings, &[d], Zeros, false);
        let spatial = b.add("pos.spatial".into(), Embeddings, &[config.patches_per_frame(), d], Normal, false);
        let temporal = b.add("pos.temporal".into(), Embeddings, &[config.frames, d], Normal, false);
        let prompts =
            (config.objects > 0).then(|| b.add("object.prompts".into(), Prompts, &[config.objects, d], Normal, false));
        let hidden = config.mlp_ratio * d;
        let blocks = (0..config.depth)
            .map(|i| {
                let n = |s: &str| format!("block{i}.{s}");
                BlockIds {
                    ln1_g: b.add(n("ln1.gain"), Attention, &[d], Ones, false),
                    ln1_b: b.add(n("ln1.bias"), Attention, &[d], Zeros, false),
                    qkv_w: b.add(n("attn.qkv.weight"), Attention, &[d, 3 * d], Normal, true),
                    qkv_b: b.add(n("attn.qv.bias"), Attention, &[1, 2 * d], Zeros, false),
                    out_w: b.add(n("attn.out.weight"), Attention, &[d, d], Zeros, true),
                    out_b: b.add(n("attn.out.bias"), Attention, &[d], Zeros, false),
                    ln2_g: b.add(n("ln2.gain"), Mlp, &[d], Ones, false),
                    ln2_b: b.add(n("ln2.bias"), Mlp, &[d], Zeros, false),
                    fc1_w: b.add(n("mlp.fc1.weight"), Mlp, &[d, hidden], Normal, true),
                    fc1_b: b.add(n("mlp.fc1.bias"), Mlp, &[hidden], Zeros, false),
                    fc2_w: b.add(n("mlp.fc2.weight"), Mlp, &[hidden, d], Zeros, true),
                    fc2_b: b.add(n("mlp.fc2.bias"), Mlp, &[d], Zeros, false),
                }
            })
            .collect();
        let graph = match config.haog_head {
            HaogHead::None => None,
            head => {
                let c = config.contact_logits;
                Some(GraphIds {
                    bb_w: b.add("haog.box.weight".into(), Heads, &[d, 4], Normal, true),
                    bb_b: b.add("haog.box.bias".into(), Heads, &[4], Zeros, false),
                    exist_w: b.add("haog.exist.weight".into(), Heads, &[d, 1], Normal, true),
                    exist_b: b.add("haog.exist.bias".into(), Heads, &[1], Zeros, false),
                    contact_w: b.add("haog.contact.weight".into(), Heads, &[2 * d, c], Normal, true),
                    contact_b: b.add("haog.contact.bias".into(), Heads, &[c], Zeros, false),
                    slots: (head == HaogHead::Pooled).then(|| {
                        (
                            b.add("haog.slots.weight".into(), Heads, &[d, 4 * d], Normal, true),
                            b.add("haog.slots.bias".into(), Heads, &[4 * d], Zeros, false),
                        )
                    }),
                })
            }
        };
        let cls_w = b.add("cls.weight".into(), Heads, &[d, config.classes], Normal, true);
        let cls_b = b.add("cls.bias".into(), Heads, &[config.classes], Zeros, false);
        let layout = Layout { patch_w, patch_b, spatial, temporal, prompts, blocks, graph, cls_w, cls_b };
        Ok(Self { config, params: b.params, layout })
    }

    /// Rebuilds a model from stored tensors, checking names and shapes
    /// against the layout implied by `config`.
    pub fn from_params(config: ModelConfig, stored: Vec<(String, Tensor)>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if stored.len() != model.params.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} tensors, configuration needs {}",
                stored.len(),
                model.params.len()
            )));
        }
        for (p, (name, value)) in model.params.iter_mut().zip(stored) {
            if p.name != name || p.value.shape() != value.shape() {
                return Err(Error::Config(format!(
                    "checkpoint tensor {name} {:?} does not match {} {:?}",
                    value.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            p.value = value;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Overwrites every parameter with `N(0, std^2)` draws, including the
    /// ones initialised to zero or one. Used for gradient checks, where the
    /// production initialisation would leave whole subgraphs with zero
    /// gradient.
    pub fn randomize(&mut self, seed: u64, std: f64) {
        for p in &mut self.params {
            let mut rng = ChaCha8Rng::seed_from_u64(name_seed(seed, &p.name));
            for v in p.value.data_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = z * std;
            }
        }
    }

    /// Copies the value of every parameter whose name and shape also exist
    /// in `other`.
    pub fn copy_shared_from(&mut self, other: &Model) {
        for p in &mut self.params {
            if let Some(q) = other.param(&p.name) {
                if q.value.shape() == p.value.shape() {
                    p.value = q.value.clone();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(head: HaogHead, objects: usize, contact_logits: usize) -> ModelConfig {
        ModelConfig {
            d_model: 8,
            depth: 2,
            heads: 2,
            patch_size: 4,
            frames: 2,
            height: 8,
            width: 8,
            objects,
            haog_head: head,
            contact_logits,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn count_matches_closed_form() {
        for (head, n) in [(HaogHead::None, 0), (HaogHead::ObjectTokens, 4), (HaogHead::Pooled, 0)] {
            for c in [1, 2] {
                let cfg = tiny(head, n, c);
                let m = Model::new(cfg.clone(), 0).unwrap();
                assert_eq!(m.parameter_count(), cfg.parameter_count(), "{head:?} contact {c}");
            }
        }
        let cfg = ModelConfig::default();
        assert_eq!(Model::new(cfg.clone(), 1).unwrap().parameter_count(), cfg.parameter_count());
    }

    #[test]
    fn shared_parameters_start_identical() {
        let a = Model::new(tiny(HaogHead::None, 0, 2), 5).unwrap();
        let b = Model::new(tiny(HaogHead::ObjectTokens, 4, 2), 5).unwrap();
        for p in a.params() {
            assert_eq!(Some(p), b.param(&p.name), "{}", p.name);
        }
    }

    #[test]
    fn init_is_truncated_and_zeroes_output_projections() {
        let m = Model::new(ModelConfig::default(), 3).unwrap();
        let w = &m.param("patch.weight").unwrap().value;
        assert!(w.data().iter().all(|v| v.abs() <= 2.0 * 0.02));
        assert!(m.param("block0.attn.out.weight").unwrap().value.data().iter().all(|v| *v == 0.0));
        assert!(m.param("block3.mlp.fc2.weight").unwrap().value.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn from_params_rejects_mismatch() {
        let m = Model::new(tiny(HaogHead::ObjectTokens, 4, 2), 0).unwrap();
        let mut stored: Vec<_> = m.params().iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        stored[0].1 = Tensor::zeros(&[1, 1]);
        assert!(Model::from_params(m.config().clone(), stored).is_err());
    }
}
