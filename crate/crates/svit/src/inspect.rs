//! Static SVG overlays of predicted and ground-truth graphs.
//!
//! Each frame is drawn as a pixel grid with ground-truth boxes (dashed),
//! predicted boxes whose existence probability reaches [`SHOW_THRESHOLD`]
//! and a line between hand and object centers for every contact.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use svit_core::data::Sample;
use svit_core::geometry::{BBox, Haog};
use svit_core::model::{Clip, HaogPrediction, Model};
use svit_core::train::predict_graph;

use crate::error::{io_err, Result};

pub const SHOW_THRESHOLD: f64 = 0.6;
/// Screen pixels per image pixel.
pub const SCALE: usize = 8;

const SLOT_COLORS: [&str; 4] = ["#e6194b", "#3cb44b", "#4363d8", "#f58231"];
const SLOT_NAMES: [&str; 4] = ["left hand", "right hand", "left object", "right object"];

fn byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn rect(out: &mut String, b: &BBox, size: f64, color: &str, dashed: bool, title: &str) {
    let [x1, y1, x2, y2] = b.corners();
    let dash = if dashed { " stroke-dasharray=\"4 3\"" } else { "" };
    let _ = writeln!(
        out,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash}><title>{title}</title></rect>",
        x1 * size,
        y1 * size,
        (x2 - x1) * size,
        (y2 - y1) * size
    );
}

fn line(out: &mut String, a: &BBox, b: &BBox, size: f64, dashed: bool) {
    let dash = if dashed { " stroke-dasharray=\"4 3\"" } else { "" };
    let _ = writeln!(
        out,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#ffe119\" stroke-width=\"3\"{dash}/>",
        a.cx * size,
        a.cy * size,
        b.cx * size,
        b.cy * size
    );
}

/// SVG document for one frame (`image` is a one-frame clip). `truth` is
/// optional so predictions alone can be drawn.
pub fn frame_svg(image: &Clip, truth: Option<&Haog>, pred: &HaogPrediction) -> String {
    let (h, w) = (image.height, image.width);
    let size = (w * SCALE) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" shape-rendering=\"crispEdges\">",
        w * SCALE,
        h * SCALE,
        w * SCALE,
        h * SCALE
    );
    for y in 0..h {
        for x in 0..w {
            let c: Vec<u8> = (0..3).map(|k| byte(image.pixel(0, y, x, k.min(image.channels - 1)))).collect();
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{SCALE}\" height=\"{SCALE}\" fill=\"#{:02x}{:02x}{:02x}\"/>",
                x * SCALE,
                y * SCALE,
                c[0],
                c[1],
                c[2]
            );
        }
    }
    if let Some(g) = truth {
        for i in 0..4 {
            if g.exists[i] {
                rect(&mut out, &g.boxes[i], size, SLOT_COLORS[i], true, &format!("{} (truth)", SLOT_NAMES[i]));
            }
        }
        for j in 0..2 {
            if g.contacts[j] {
                line(&mut out, &g.boxes[j], &g.boxes[j + 2], size, true);
            }
        }
    }
    let shown: Vec<bool> = (0..4).map(|i| pred.exist_prob(i) >= SHOW_THRESHOLD).collect();
    for i in 0..4 {
        if shown[i] {
            let title = format!("{} p={:.3}", SLOT_NAMES[i], pred.exist_prob(i));
            rect(&mut out, &pred.boxes[i], size, SLOT_COLORS[i], false, &title);
        }
    }
    for j in 0..2 {
        if shown[j] && shown[j + 2] && pred.contact_prob(j) >= 0.5 {
            line(&mut out, &pred.boxes[j], &pred.boxes[j + 2], size, false);
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `<id>_f<t>.svg` for every frame of `sample`; returns the paths.
pub fn inspect(model: &Model, sample: &Sample, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut paths = Vec::new();
    for t in 0..sample.frames.frames {
        let pred = predict_graph(model, sample, t)?;
        let svg = frame_svg(&sample.frames.frame(t), sample.haogs.get(t), &pred);
        let p = dir.join(format!("{}_f{t}.svg", sample.id));
        std::fs::write(&p, svg).map_err(io_err(&p))?;
        paths.push(p);
    }
    Ok(paths)
}
