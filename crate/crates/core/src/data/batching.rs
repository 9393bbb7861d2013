//! Seeded mixed image/video mini-batches.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the annotated image stream comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    /// Frames of the training videos themselves.
    InDomain,
    /// Frames of a second world with disjoint noun appearances.
    OtherDomain,
    None,
}

/// Frame `frame` of sample `sample` in the image pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub sample: usize,
    pub frame: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedBatch {
    /// Indices into the video pool.
    pub videos: Vec<usize>,
    pub images: Vec<ImageRef>,
    /// Video epoch this batch started in.
    pub epoch: usize,
    /// The video order was exhausted and reshuffled while filling this batch.
    pub epoch_end: bool,
}

struct Cycle<T> {
    items: Vec<T>,
    pos: usize,
}

impl<T: Copy> Cycle<T> {
    fn take(&mut self, n: usize, rng: &mut ChaCha8Rng) -> (Vec<T>, bool) {
        let mut out = Vec::with_capacity(n);
        let mut wrapped = false;
        while out.len() < n && !self.items.is_empty() {
            if self.pos == self.items.len() {
                self.items.shuffle(rng);
                self.pos = 0;
                wrapped = true;
            }
            out.push(self.items[self.pos]);
            self.pos += 1;
        }
        if self.pos == self.items.len() && !self.items.is_empty() {
            self.items.shuffle(rng);
            self.pos = 0;
            wrapped = true;
        }
        (out, wrapped)
    }
}

/// Endless stream of `(video_bs videos, image_bs images)` batches, each
/// pool reshuffled whenever it runs out. A zero batch size disables that
/// stream.
pub struct BatchStream {
    videos: Cycle<usize>,
    images: Cycle<ImageRef>,
    video_bs: usize,
    image_bs: usize,
    video_rng: ChaCha8Rng,
    image_rng: ChaCha8Rng,
    epoch: usize,
}

impl BatchStream {
    pub fn new(num_videos: usize, images: Vec<ImageRef>, video_bs: usize, image_bs: usize, seed: u64) -> Result<Self> {
        if video_bs > 0 && num_videos == 0 || image_bs > 0 && images.is_empty() {
            return Err(Error::EmptySplit);
        }
        let mut video_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut image_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1a2b_3c4d_5e6f_7788);
        let mut v: Vec<usize> = (0..num_videos).collect();
        v.shuffle(&mut video_rng);
        let mut images = images;
        images.shuffle(&mut image_rng);
        Ok(Self {
            videos: Cycle { items: v, pos: 0 },
            images: Cycle { items: images, pos: 0 },
            video_bs,
            image_bs,
            video_rng,
            image_rng,
            epoch: 0,
        })
    }

    pub fn next_batch(&mut self) -> MixedBatch {
        let epoch = self.epoch;
        let (videos, epoch_end) = self.videos.take(self.video_bs, &mut self.video_rng);
        let (images, _) = self.images.take(self.image_bs, &mut self.image_rng);
        if epoch_end {
            self.epoch += 1;
        }
        MixedBatch { videos, images, epoch, epoch_end }
    }
}

impl Iterator for BatchStream {
    type Item = MixedBatch;

    fn next(&mut self) -> Option<MixedBatch> {
        Some(self.next_batch())
    }
}
