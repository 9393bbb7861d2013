//! Dataset directory:
//!
//! ```text
//! <dir>/manifest.json           world config, split pair lists, sample index
//! <dir>/<split>/<id>.f32        frames [T, H, W, C], little-endian f32
//! <dir>/<split>/<id>.jsonl      one annotation record per frame
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use svit_core::data::{AnnotationRecord, Dataset, PairSplit, Sample, SplitTag, WorldConfig};
use svit_core::model::Clip;

use crate::annotations;
use crate::error::{format_err, io_err, Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub split: SplitTag,
    pub verb: usize,
    pub noun: usize,
    pub label: usize,
    /// Paths relative to the dataset directory.
    pub frames: String,
    pub annotations: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub world: WorldConfig,
    pub split: PairSplit,
    pub samples: Vec<SampleEntry>,
}

fn split_dir(tag: SplitTag) -> &'static str {
    match tag {
        SplitTag::Train => "train",
        SplitTag::Test => "test",
    }
}

pub fn parse_split(s: &str) -> Result<SplitTag> {
    match s {
        "train" => Ok(SplitTag::Train),
        "test" => Ok(SplitTag::Test),
        other => Err(Error::Usage(format!("split must be train or test, got {other:?}"))),
    }
}

pub fn write(dir: &Path, data: &Dataset) -> Result<Manifest> {
    let mut samples = Vec::new();
    for (tag, list) in [(SplitTag::Train, &data.train), (SplitTag::Test, &data.test)] {
        let sub = dir.join(split_dir(tag));
        std::fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        for s in list {
            let frames = format!("{}/{}.f32", split_dir(tag), s.id);
            let ann = format!("{}/{}.jsonl", split_dir(tag), s.id);
            let bytes: Vec<u8> = s.frames.data.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
            let p = dir.join(&frames);
            std::fs::write(&p, bytes).map_err(io_err(&p))?;
            let recs: Vec<_> = s.haogs.iter().enumerate().map(|(t, g)| AnnotationRecord::from_haog(&s.id, t, g)).collect();
            annotations::write(&dir.join(&ann), &recs)?;
            samples.push(SampleEntry { id: s.id.clone(), split: tag, verb: s.verb, noun: s.noun, label: s.label, frames, annotations: ann });
        }
    }
    let manifest = Manifest { world: data.world.clone(), split: data.split.clone(), samples };
    let p = dir.join(MANIFEST);
    std::fs::write(&p, serde_json::to_string_pretty(&manifest).expect("manifest serializes")).map_err(io_err(&p))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let p = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&p).map_err(io_err(&p))?;
    serde_json::from_str(&text).map_err(|e| format_err(&p, e))
}

fn load_sample(dir: &Path, world: &WorldConfig, e: &SampleEntry) -> Result<Sample> {
    let p: PathBuf = dir.join(&e.frames);
    let bytes = std::fs::read(&p).map_err(io_err(&p))?;
    let (t, c, n) = (world.frames, world.channels, world.canvas);
    if bytes.len() != 4 * t * n * n * c {
        return Err(format_err(&p, format!("expected {} bytes of f32 frames, found {}", 4 * t * n * n * c, bytes.len())));
    }
    let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64).collect();
    let frames = Clip::new(t, n, n, c, data)?;
    let ap = dir.join(&e.annotations);
    let recs = annotations::read(&ap)?;
    if recs.len() != t || recs.iter().enumerate().any(|(i, r)| r.frame != i || r.id != e.id) {
        return Err(format_err(&ap, format!("expected frames 0..{t} of {}", e.id)));
    }
    let haogs = recs.iter().map(|r| r.to_haog()).collect::<svit_core::Result<Vec<_>>>()?;
    Ok(Sample { id: e.id.clone(), frames, label: e.label, haogs, verb: e.verb, noun: e.noun, split: e.split })
}

/// Samples of one split, in manifest order.
pub fn read_split(dir: &Path, tag: SplitTag) -> Result<(Manifest, Vec<Sample>)> {
    let m = read_manifest(dir)?;
    let samples = m.samples.iter().filter(|e| e.split == tag).map(|e| load_sample(dir, &m.world, e)).collect::<Result<_>>()?;
    Ok((m, samples))
}

/// Looks a sample up by id in either split.
pub fn read_sample(dir: &Path, id: &str) -> Result<Sample> {
    let m = read_manifest(dir)?;
    let e = m.samples.iter().find(|e| e.id == id).ok_or_else(|| Error::Usage(format!("no sample {id:?} in {}", dir.display())))?;
    load_sample(dir, &m.world, e)
}
