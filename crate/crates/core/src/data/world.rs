//! Procedural hand-object world.
//!
//! An episode has one acting hand (left or right) that performs the verb's
//! motion program on one object whose shape and color come from the noun.
//! The other hand may idle somewhere in the frame as a distractor. Every
//! entity is an axis-aligned glyph placed on the integer pixel grid, so the
//! annotated boxes coincide with the rasterised masks.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Haog, LEFT_HAND, LEFT_OBJECT};
use crate::math;
use crate::model::Clip;

pub const VERB_NAMES: [&str; 6] = [
    "translate-right",
    "translate-left",
    "approach-and-contact",
    "contact-and-lift",
    "shake-in-contact",
    "orbit-without-contact",
];

pub const NOUN_NAMES: [&str; 6] = ["square", "disk", "diamond", "wide-bar", "tall-bar", "plus"];
pub const OTHER_NOUN_NAMES: [&str; 6] = ["ring", "triangle", "cross", "checker", "hoop", "tee"];

/// Appearance family of nouns and background.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Flat noisy background, the video task's own nouns.
    Primary,
    /// Striped background and a disjoint set of noun appearances; same
    /// hands, verbs and graph schema.
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Square canvas side in pixels.
    pub canvas: usize,
    pub frames: usize,
    pub channels: usize,
    pub verbs: usize,
    pub nouns: usize,
    /// Hand-object center distance (pixels) under which contact is possible.
    pub contact_threshold: f64,
    /// Amplitude of uniform background noise.
    pub noise: f64,
    /// Probability that the idle hand is drawn.
    pub distractor_prob: f64,
    pub domain: Domain,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            canvas: 32,
            frames: 8,
            channels: 3,
            verbs: 6,
            nouns: 6,
            contact_threshold: 9.0,
            noise: 0.05,
            distractor_prob: 0.5,
            domain: Domain::Primary,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(2..=6).contains(&self.verbs) || !(2..=6).contains(&self.nouns) {
            return bad(format!("need 2..=6 verbs and nouns, got {} x {}", self.verbs, self.nouns));
        }
        if self.canvas < 16 || self.frames < 2 {
            return bad(format!("canvas {} / frames {} too small", self.canvas, self.frames));
        }
        if self.channels != 3 {
            return bad(format!("renderer draws RGB, got {} channels", self.channels));
        }
        if !(self.contact_threshold > 0.0 && self.contact_threshold < self.canvas as f64) {
            return bad(format!("contact threshold {} outside (0, canvas)", self.contact_threshold));
        }
        if !(0.0..=1.0).contains(&self.distractor_prob) || !(0.0..=0.5).contains(&self.noise) {
            return bad(format!("distractor_prob {} / noise {} out of range", self.distractor_prob, self.noise));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        self.canvas as f64 / 32.0
    }

    fn px(&self, v: f64) -> i64 {
        (v * self.scale()).round().max(2.0) as i64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Test,
}

/// One rendered episode with per-frame graph annotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub frames: Clip,
    pub label: usize,
    pub haogs: Vec<Haog>,
    pub verb: usize,
    pub noun: usize,
    pub split: SplitTag,
}

impl Sample {
    /// Frame `t` as an annotated image.
    pub fn image(&self, t: usize) -> (Clip, Haog) {
        (self.frames.frame(t), self.haogs[t])
    }
}

/// Glyph silhouettes; every one touches all four sides of its box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Glyph {
    Hand,
    Square,
    Disk,
    Diamond,
    Plus,
    Ring,
    Triangle,
    Cross,
    Checker,
    Hoop,
    Tee,
}

impl Glyph {
    /// Whether cell `(x, y)` of a `w x h` box is filled.
    pub fn covers(self, x: i64, y: i64, w: i64, h: i64) -> bool {
        let (fx, fy) = ((x as f64 + 0.5) / w as f64 - 0.5, (y as f64 + 0.5) / h as f64 - 0.5);
        let edge = x == 0 || y == 0 || x == w - 1 || y == h - 1;
        let mid_x = (x - (w - 1) / 2).abs() <= (w / 6).max(0) || x == w / 2;
        let mid_y = (y - (h - 1) / 2).abs() <= (h / 6).max(0) || y == h / 2;
        match self {
            // fingers: comb along the top row, palm below
            Glyph::Hand => y > 0 || x % 2 == 0 || x == w - 1,
            Glyph::Square => true,
            Glyph::Disk => fx * fx + fy * fy <= 0.25 + 0.5 / (w * h) as f64 || mid_x && mid_y || (mid_x && (y == 0 || y == h - 1)) || (mid_y && (x == 0 || x == w - 1)),
            Glyph::Diamond => fx.abs() + fy.abs() <= 0.5 + 0.5 / w.min(h) as f64,
            Glyph::Plus => mid_x || mid_y,
            Glyph::Ring => edge,
            Glyph::Triangle => {
                let half = (y as f64 + 1.0) / h as f64 * 0.5;
                fx.abs() <= half + 0.5 / w as f64 || y == h - 1
            }
            Glyph::Cross => {
                let (a, b) = (x * (h - 1), y * (w - 1));
                (a - b).abs() <= w.max(h) || (a - ((h - 1) * (w - 1) - b)).abs() <= w.max(h)
            }
            Glyph::Checker => (x / 2 + y / 2) % 2 == 0 || edge && (x == 0 || y == 0),
            Glyph::Hoop => {
                let r = fx * fx + fy * fy;
                (0.12..=0.25 + 0.5 / (w * h) as f64).contains(&r) || mid_x && (y == 0 || y == h - 1) || mid_y && (x == 0 || x == w - 1)
            }
            Glyph::Tee => y <= (h / 3).max(1) - 1 || mid_x,
        }
    }
}

/// A glyph instance: top-left pixel, size and color.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sprite {
    pub glyph: Glyph,
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
    pub color: [f64; 3],
}

impl Sprite {
    /// Filled pixels, clipped to the canvas.
    pub fn mask(&self, canvas: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for dy in 0..self.h {
            for dx in 0..self.w {
                let (px, py) = (self.x + dx, self.y + dy);
                if px >= 0 && py >= 0 && (px as usize) < canvas && (py as usize) < canvas && self.glyph.covers(dx, dy, self.w, self.h) {
                    out.push((px as usize, py as usize));
                }
            }
        }
        out
    }

    pub fn bbox(&self, canvas: usize) -> BBox {
        let s = canvas as f64;
        BBox::from_corners(self.x as f64 / s, self.y as f64 / s, (self.x + self.w) as f64 / s, (self.y + self.h) as f64 / s)
    }

    fn center(&self) -> (f64, f64) {
        (self.x as f64 + 0.5 * self.w as f64, self.y as f64 + 0.5 * self.h as f64)
    }
}

/// Renderer state of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameScene {
    pub object: Sprite,
    pub acting: Sprite,
    pub idle: Option<Sprite>,
    pub contact: bool,
}

/// Per-frame renderer state of an episode, acting hand side (0 = left).
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub side: usize,
    pub scenes: Vec<FrameScene>,
}

impl Episode {
    /// Ground-truth graph of frame `t`, read off the renderer state.
    pub fn haog(&self, t: usize, canvas: usize) -> Haog {
        let s = &self.scenes[t];
        let mut g = Haog::empty();
        let (hand, obj) = (LEFT_HAND + self.side, LEFT_OBJECT + self.side);
        g.boxes[hand] = s.acting.bbox(canvas);
        g.exists[hand] = true;
        g.boxes[obj] = s.object.bbox(canvas);
        g.exists[obj] = true;
        g.contacts[self.side] = s.contact;
        if let Some(idle) = &s.idle {
            let other = 1 - self.side;
            g.boxes[LEFT_HAND + other] = idle.bbox(canvas);
            g.exists[LEFT_HAND + other] = true;
        }
        g
    }
}

fn hand_color(side: usize) -> [f64; 3] {
    if side == 0 {
        [0.9, 0.15, 0.15]
    } else {
        [0.15, 0.8, 0.2]
    }
}

/// `(glyph, width, height, color)` at the 32-pixel reference scale.
fn noun_appearance(domain: Domain, noun: usize) -> (Glyph, f64, f64, [f64; 3]) {
    match (domain, noun) {
        (Domain::Primary, 0) => (Glyph::Square, 8.0, 8.0, [0.2, 0.4, 1.0]),
        (Domain::Primary, 1) => (Glyph::Disk, 9.0, 9.0, [1.0, 0.9, 0.2]),
        (Domain::Primary, 2) => (Glyph::Diamond, 9.0, 9.0, [0.9, 0.25, 0.9]),
        (Domain::Primary, 3) => (Glyph::Square, 11.0, 5.0, [0.2, 0.9, 0.9]),
        (Domain::Primary, 4) => (Glyph::Square, 5.0, 11.0, [1.0, 1.0, 1.0]),
        (Domain::Primary, _) => (Glyph::Plus, 9.0, 9.0, [1.0, 0.55, 0.0]),
        (Domain::Other, 0) => (Glyph::Ring, 9.0, 9.0, [0.6, 0.6, 0.2]),
        (Domain::Other, 1) => (Glyph::Triangle, 9.0, 8.0, [0.4, 0.3, 0.9]),
        (Domain::Other, 2) => (Glyph::Cross, 9.0, 9.0, [0.9, 0.6, 0.6]),
        (Domain::Other, 3) => (Glyph::Checker, 8.0, 8.0, [0.5, 0.9, 0.5]),
        (Domain::Other, 4) => (Glyph::Hoop, 10.0, 10.0, [0.3, 0.7, 1.0]),
        (Domain::Other, _) => (Glyph::Tee, 9.0, 9.0, [1.0, 0.8, 0.6]),
    }
}

/// Relative hand-object layout of one frame at reference scale:
/// `(object offset, hand offset relative to object, in contact)`.
fn program(verb: usize, side: usize, phase: f64, rng_param: f64, reach: f64) -> ((f64, f64), (f64, f64), bool) {
    let dir = if side == 0 { -1.0 } else { 1.0 };
    let touching = (dir * reach, 0.0);
    let tau = core::f64::consts::TAU;
    match verb {
        0 => ((10.0 * phase, 0.0), touching, true),
        1 => ((-10.0 * phase, 0.0), touching, true),
        2 => {
            let arrive = 0.6;
            let start = 14.0 + 2.0 * rng_param;
            let k = (phase / arrive).min(1.0);
            let dist = start + (reach - start) * k;
            let lateral = 4.0 * (rng_param - 0.5) * (1.0 - k);
            ((0.0, 0.0), (dir * dist, lateral), phase >= arrive - 1e-9)
        }
        3 => ((0.0, -9.0 * phase), touching, true),
        4 => ((4.0 * math::sin(2.0 * tau * phase), 0.0), touching, true),
        _ => {
            let radius = 12.0;
            let spin = if rng_param < 0.5 { 1.0 } else { -1.0 };
            let theta = (if side == 0 { 0.5 } else { 0.0 }) * tau + spin * 0.75 * tau * phase;
            ((0.0, 0.0), (radius * math::cos(theta), radius * math::sin(theta)), false)
        }
    }
}

/// Trajectory of one episode before it is placed on the canvas.
pub fn episode(cfg: &WorldConfig, verb: usize, noun: usize, seed: u64) -> Result<Episode> {
    cfg.validate()?;
    if verb >= cfg.verbs || noun >= cfg.nouns {
        return Err(Error::Config(format!("unknown verb {verb} or noun {noun}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = rng.random_range(0..2usize);
    let param: f64 = rng.random();
    let (glyph, ow, oh, color) = noun_appearance(cfg.domain, noun);
    let jitter = |rng: &mut ChaCha8Rng, c: [f64; 3]| c.map(|v: f64| (v * rng.random_range(0.85..1.0)).clamp(0.0, 1.0));
    let ocolor = jitter(&mut rng, color);
    let hcolor = jitter(&mut rng, hand_color(side));
    let (ow, oh, hs) = (cfg.px(ow), cfg.px(oh), cfg.px(6.0));
    let s = cfg.scale();
    let reach = 0.5 * (ow as f64 / s + hs as f64 / s) - 1.0;
    // relative frames at reference scale, converted to pixels
    let rel: Vec<_> = (0..cfg.frames)
        .map(|t| {
            let phase = t as f64 / (cfg.frames - 1) as f64;
            program(verb, side, phase, param, reach)
        })
        .collect();
    let place = |ox: f64, oy: f64, w: i64, h: i64| -> (i64, i64) {
        (math::round(ox * s - 0.5 * w as f64) as i64, math::round(oy * s - 0.5 * h as f64) as i64)
    };
    // bounding extents of the whole trajectory with the object centered at 0
    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for ((ox, oy), (hx, hy), _) in &rel {
        let (x, y) = place(*ox, *oy, ow, oh);
        let (a, b) = place(ox + hx, oy + hy, hs, hs);
        lo_x = lo_x.min(x).min(a);
        lo_y = lo_y.min(y).min(b);
        hi_x = hi_x.max(x + ow).max(a + hs);
        hi_y = hi_y.max(y + oh).max(b + hs);
    }
    let canvas = cfg.canvas as i64;
    let (span_x, span_y) = (hi_x - lo_x, hi_y - lo_y);
    if span_x > canvas || span_y > canvas {
        return Err(Error::Config(format!("canvas {canvas} too small for verb {verb}")));
    }
    let shift_x = rng.random_range(0..=canvas - span_x) - lo_x;
    let shift_y = rng.random_range(0..=canvas - span_y) - lo_y;
    let mut scenes: Vec<FrameScene> = rel
        .iter()
        .map(|((ox, oy), (hx, hy), contact)| {
            let (x, y) = place(*ox, *oy, ow, oh);
            let (a, b) = place(ox + hx, oy + hy, hs, hs);
            let object = Sprite { glyph, x: x + shift_x, y: y + shift_y, w: ow, h: oh, color: ocolor };
            let acting = Sprite { glyph: Glyph::Hand, x: a + shift_x, y: b + shift_y, w: hs, h: hs, color: hcolor };
            FrameScene { object, acting, idle: None, contact: *contact }
        })
        .collect();
    if rng.random_bool(cfg.distractor_prob) {
        let other = hand_color(1 - side);
        let icolor = jitter(&mut rng, other);
        let clearance = cfg.contact_threshold + 3.0 * s;
        for _ in 0..64 {
            let x = rng.random_range(0..=canvas - hs);
            let y = rng.random_range(0..=canvas - hs);
            let idle = Sprite { glyph: Glyph::Hand, x, y, w: hs, h: hs, color: icolor };
            let (cx, cy) = idle.center();
            let clear = scenes.iter().all(|sc| {
                let far = |sp: &Sprite| {
                    let (ax, ay) = sp.center();
                    math::sqrt((ax - cx) * (ax - cx) + (ay - cy) * (ay - cy)) > clearance
                };
                far(&sc.object) && far(&sc.acting)
            });
            if clear {
                for sc in &mut scenes {
                    sc.idle = Some(idle);
                }
                break;
            }
        }
    }
    Ok(Episode { side, scenes })
}

/// Renders frame pixels `[frames, canvas, canvas, 3]`, values rounded to
/// `f32` precision so they survive 32-bit storage unchanged.
pub fn render(cfg: &WorldConfig, ep: &Episode, seed: u64) -> Clip {
    let n = cfg.canvas;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    let mut clip = Clip::zeros(cfg.frames, n, n, 3);
    let stripe_phase = rng.random_range(0..8usize);
    let base: [f64; 3] = match cfg.domain {
        Domain::Primary => [0.1, 0.1, 0.12],
        Domain::Other => [0.25, 0.2, 0.15],
    };
    for (t, scene) in ep.scenes.iter().enumerate() {
        let frame = &mut clip.data[t * n * n * 3..(t + 1) * n * n * 3];
        for y in 0..n {
            for x in 0..n {
                let stripe = match cfg.domain {
                    Domain::Primary => 0.0,
                    Domain::Other => {
                        if ((x + y + stripe_phase) / 3) % 2 == 0 {
                            0.12
                        } else {
                            0.0
                        }
                    }
                };
                for c in 0..3 {
                    let noise = cfg.noise * (2.0 * rng.random::<f64>() - 1.0);
                    frame[(y * n + x) * 3 + c] = base[c] + stripe + noise;
                }
            }
        }
        let mut sprites = vec![scene.object];
        sprites.extend(scene.idle);
        sprites.push(scene.acting);
        for sp in sprites {
            for (x, y) in sp.mask(n) {
                frame[(y * n + x) * 3..(y * n + x) * 3 + 3].copy_from_slice(&sp.color);
            }
        }
        for v in frame.iter_mut() {
            *v = v.clamp(0.0, 1.0) as f32 as f64;
        }
    }
    clip
}

/// Deterministic episode for `(cfg, verb, noun, seed)`.
pub fn generate_sample(cfg: &WorldConfig, verb: usize, noun: usize, seed: u64) -> Result<Sample> {
    let ep = episode(cfg, verb, noun, seed)?;
    let frames = render(cfg, &ep, seed);
    let haogs = (0..cfg.frames).map(|t| ep.haog(t, cfg.canvas)).collect();
    Ok(Sample {
        id: format!("v{verb}n{noun}-{seed:016x}"),
        frames,
        label: verb,
        haogs,
        verb,
        noun,
        split: SplitTag::Train,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_glyphs_touch_their_box_edges() {
        use Glyph::*;
        for g in [Hand, Square, Disk, Diamond, Plus, Ring, Triangle, Cross, Checker, Hoop, Tee] {
            for (w, h) in [(5, 5), (6, 6), (8, 8), (9, 9), (11, 5), (5, 11), (10, 10), (4, 4)] {
                let cells: Vec<(i64, i64)> =
                    (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|(x, y)| g.covers(*x, *y, w, h)).collect();
                assert!(cells.iter().any(|c| c.0 == 0), "{g:?} {w}x{h} left");
                assert!(cells.iter().any(|c| c.0 == w - 1), "{g:?} {w}x{h} right");
                assert!(cells.iter().any(|c| c.1 == 0), "{g:?} {w}x{h} top");
                assert!(cells.iter().any(|c| c.1 == h - 1), "{g:?} {w}x{h} bottom");
            }
        }
    }

    #[test]
    fn rejects_unknown_verb() {
        assert!(generate_sample(&WorldConfig::default(), 6, 0, 1).is_err());
        assert!(generate_sample(&WorldConfig { verbs: 3, ..WorldConfig::default() }, 3, 0, 1).is_err());
    }

    #[test]
    fn every_verb_fits_small_canvas() {
        let cfg = WorldConfig { canvas: 16, ..WorldConfig::default() };
        for v in 0..6 {
            for n in 0..6 {
                generate_sample(&cfg, v, n, 3).unwrap();
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(WorldConfig { verbs: 1, ..WorldConfig::default() }.validate().is_err());
        assert!(WorldConfig { contact_threshold: 40.0, ..WorldConfig::default() }.validate().is_err());
    }
}
