use svit::inspect::{frame_svg, SHOW_THRESHOLD};
use svit_core::geometry::{BBox, Haog};
use svit_core::model::{Clip, HaogPrediction};

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn prediction(exist: [f64; 4], contact: [bool; 2]) -> HaogPrediction {
    HaogPrediction {
        boxes: [0.2, 0.4, 0.6, 0.8].map(|c| BBox { cx: c, cy: 0.5, w: 0.1, h: 0.1 }),
        exist_logits: exist.map(logit),
        contact_logits: contact.map(|c| if c { [0.0, 3.0] } else { [3.0, 0.0] }),
    }
}

fn solid(svg: &str) -> usize {
    svg.lines().filter(|l| l.contains("fill=\"none\"") && !l.contains("dasharray")).count()
}

fn lines(svg: &str) -> usize {
    svg.lines().filter(|l| l.starts_with("<line")).count()
}

#[test]
fn existence_threshold() {
    assert_eq!(SHOW_THRESHOLD, 0.6);
    let image = Clip::zeros(1, 4, 4, 3);
    let svg = frame_svg(&image, None, &prediction([0.59, 0.61, 0.2, 0.99], [false, false]));
    assert_eq!(solid(&svg), 2);
    assert!(svg.contains("right hand p=0.610") && svg.contains("right object p=0.990"));
    assert!(!svg.contains("left hand p="));
}

#[test]
fn contact_lines_follow_predictions() {
    let image = Clip::zeros(1, 4, 4, 3);
    assert_eq!(lines(&frame_svg(&image, None, &prediction([0.9; 4], [false, false]))), 0);
    assert_eq!(lines(&frame_svg(&image, None, &prediction([0.9; 4], [true, false]))), 1);
    assert_eq!(lines(&frame_svg(&image, None, &prediction([0.9; 4], [true, true]))), 2);
    // a contact whose object is hidden is not drawn
    assert_eq!(lines(&frame_svg(&image, None, &prediction([0.9, 0.9, 0.5, 0.9], [true, true]))), 1);
}

#[test]
fn truth_is_drawn_dashed_and_output_is_deterministic() {
    let image = Clip::new(1, 2, 2, 3, (0..12).map(|k| k as f64 / 12.0).collect()).unwrap();
    let mut g = Haog::empty();
    g.exists = [true, false, true, false];
    g.contacts = [true, false];
    g.boxes[0] = BBox { cx: 0.3, cy: 0.3, w: 0.2, h: 0.2 };
    g.boxes[2] = BBox { cx: 0.5, cy: 0.5, w: 0.2, h: 0.2 };
    let p = prediction([0.1; 4], [false, false]);
    let a = frame_svg(&image, Some(&g), &p);
    assert_eq!(a, frame_svg(&image, Some(&g), &p));
    assert_eq!(a.lines().filter(|l| l.contains("dasharray")).count(), 3);
    assert_eq!(solid(&a), 0);
    assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
}
