//! Synthetic compositional hand-object videos, graph annotations, the
//! compositional split and mixed image/video batching.

mod batching;
mod split;
mod world;

pub use batching::{BatchStream, ImageRef, ImageSource, MixedBatch};
pub use split::{make_compositional_split, randomize_haog, PairSplit};
pub use world::{
    episode, generate_sample, render, Domain, Episode, FrameScene, Glyph, Sample, SplitTag, Sprite, WorldConfig,
    NOUN_NAMES, OTHER_NOUN_NAMES, VERB_NAMES,
};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{BBox, Haog};

/// Serialized per-frame graph annotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub frame: usize,
    pub boxes: [[f64; 4]; 4],
    pub exist: [bool; 4],
    pub contact: [bool; 2],
}

impl AnnotationRecord {
    pub fn from_haog(id: &str, frame: usize, g: &Haog) -> Self {
        Self { id: id.into(), frame, boxes: g.boxes.map(|b| b.coords()), exist: g.exists, contact: g.contacts }
    }

    /// The graph, with its invariants checked.
    pub fn to_haog(&self) -> Result<Haog> {
        let g = Haog { boxes: self.boxes.map(BBox::predicted), exists: self.exist, contacts: self.contact };
        g.validate()?;
        Ok(g)
    }
}

/// Mixes `a` and `b` into one well-spread seed.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Train and test episodes over a compositional split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub world: WorldConfig,
    pub split: PairSplit,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    /// `per_train_pair` / `per_test_pair` episodes of every pair in each
    /// split, seeded from `world.seed`.
    pub fn generate(world: &WorldConfig, per_train_pair: usize, per_test_pair: usize) -> Result<Self> {
        world.validate()?;
        let split = make_compositional_split(world.verbs, world.nouns, world.seed)?;
        let make = |pairs: &[(usize, usize)], per: usize, tag: SplitTag, salt: u64| -> Result<Vec<Sample>> {
            let mut out = Vec::with_capacity(pairs.len() * per);
            for k in 0..per {
                for (v, n) in pairs {
                    let seed = mix_seed(world.seed, mix_seed(salt, ((*v as u64) << 40) | ((*n as u64) << 32) | k as u64));
                    let mut s = generate_sample(world, *v, *n, seed)?;
                    s.split = tag;
                    out.push(s);
                }
            }
            Ok(out)
        };
        let train = make(&split.train, per_train_pair, SplitTag::Train, 1)?;
        let test = make(&split.test, per_test_pair, SplitTag::Test, 2)?;
        Ok(Self { world: world.clone(), split, train, test })
    }

    /// Annotated frames of the given samples.
    pub fn frames(samples: &[Sample]) -> Vec<ImageRef> {
        samples.iter().enumerate().flat_map(|(i, s)| (0..s.haogs.len()).map(move |t| ImageRef { sample: i, frame: t })).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trip_and_invariant() {
        let s = generate_sample(&WorldConfig::default(), 2, 1, 9).unwrap();
        let r = AnnotationRecord::from_haog(&s.id, 3, &s.haogs[3]);
        assert_eq!(r.to_haog().unwrap(), s.haogs[3]);
        let mut bad = r.clone();
        bad.exist = [false; 4];
        bad.contact = [true, false];
        assert!(bad.to_haog().is_err());
    }

    #[test]
    fn dataset_counts() {
        let w = WorldConfig { canvas: 16, frames: 3, ..WorldConfig::default() };
        let d = Dataset::generate(&w, 2, 1).unwrap();
        assert_eq!(d.train.len(), 36);
        assert_eq!(d.test.len(), 18);
        assert!(d.train.iter().all(|s| d.split.train.contains(&(s.verb, s.noun))));
        assert!(d.test.iter().all(|s| d.split.test.contains(&(s.verb, s.noun)) && s.split == SplitTag::Test));
        assert_eq!(Dataset::frames(&d.test).len(), 54);
    }
}
