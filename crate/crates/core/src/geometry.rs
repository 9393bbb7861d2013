//! Boxes, generalized IoU, and the hand-object graph record.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// `(cx, cy, w, h)` in frame-normalised units.
pub type BoxCoords = [f64; 4];

pub const LEFT_HAND: usize = 0;
pub const RIGHT_HAND: usize = 1;
pub const LEFT_OBJECT: usize = 2;
pub const RIGHT_OBJECT: usize = 3;

/// Axis-aligned box in center-size form, normalised to the frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// Filler for slots whose existence flag is false.
    pub const PLACEHOLDER: BBox = BBox { cx: 0.5, cy: 0.5, w: 0.5, h: 0.5 };

    /// Ground-truth box: center in `[0, 1]`, extent in `(0, 1]`.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { cx, cy, w, h };
        let ok = [cx, cy, w, h].iter().all(|v| v.is_finite())
            && (0.0..=1.0).contains(&cx)
            && (0.0..=1.0).contains(&cy)
            && w > 0.0
            && w <= 1.0
            && h > 0.0
            && h <= 1.0;
        if ok {
            Ok(b)
        } else {
            Err(Error::InvalidBox(format!("{b:?}")))
        }
    }

    /// Model output; only finiteness is required.
    pub fn predicted(coords: BoxCoords) -> Self {
        let [cx, cy, w, h] = coords;
        Self { cx, cy, w, h }
    }

    /// Builds a box from `(x1, y1, x2, y2)` corners.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { cx: 0.5 * (x1 + x2), cy: 0.5 * (y1 + y2), w: x2 - x1, h: y2 - y1 }
    }

    pub fn coords(&self) -> BoxCoords {
        [self.cx, self.cy, self.w, self.h]
    }

    /// `(x1, y1, x2, y2)` clipped to the unit square.
    pub fn corners(&self) -> [f64; 4] {
        let c = |v: f64| v.clamp(0.0, 1.0);
        [
            c(self.cx - 0.5 * self.w),
            c(self.cy - 0.5 * self.h),
            c(self.cx + 0.5 * self.w),
            c(self.cy + 0.5 * self.h),
        ]
    }

    pub fn area(&self) -> f64 {
        let [x1, y1, x2, y2] = self.corners();
        (x2 - x1) * (y2 - y1)
    }

    pub fn center_distance(&self, other: &BBox) -> f64 {
        let (dx, dy) = (self.cx - other.cx, self.cy - other.cy);
        math::sqrt(dx * dx + dy * dy)
    }
}

/// Clipped corner with its derivative w.r.t. the unclipped value.
fn clip(v: f64) -> (f64, f64) {
    if v <= 0.0 {
        (0.0, 0.0)
    } else if v >= 1.0 {
        (1.0, 0.0)
    } else {
        (v, 1.0)
    }
}

/// Generalized IoU of `pred` against `target`, plus its gradient w.r.t. the
/// `(cx, cy, w, h)` of `pred`.
///
/// Corners are clipped to the unit square; clipped coordinates get zero
/// gradient. An empty enclosing box yields `giou = 0` with zero gradient.
pub fn giou_and_grad(pred: BoxCoords, target: BoxCoords) -> (f64, BoxCoords) {
    let [cx, cy, w, h] = pred;
    let (x1, jx1) = clip(cx - 0.5 * w);
    let (x2, jx2) = clip(cx + 0.5 * w);
    let (y1, jy1) = clip(cy - 0.5 * h);
    let (y2, jy2) = clip(cy + 0.5 * h);
    let [tx1, ty1, tx2, ty2] = BBox::predicted(target).corners();

    let (pw, ph) = (x2 - x1, y2 - y1);
    let area_p = pw * ph;
    let area_t = (tx2 - tx1) * (ty2 - ty1);

    let iw = x2.min(tx2) - x1.max(tx1);
    let ih = y2.min(ty2) - y1.max(ty1);
    let overlaps = iw > 0.0 && ih > 0.0;
    let inter = if overlaps { iw * ih } else { 0.0 };
    let union = area_p + area_t - inter;

    let ew = x2.max(tx2) - x1.min(tx1);
    let eh = y2.max(ty2) - y1.min(ty1);
    let enclose = ew * eh;
    if enclose <= 0.0 {
        return (0.0, [0.0; 4]);
    }
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    let giou = iou - 1.0 + union / enclose;

    // partials w.r.t. the clipped corners (x1, x2, y1, y2)
    let d_area = [-ph, ph, -pw, pw];
    let d_inter = if overlaps {
        [
            if x1 > tx1 { -ih } else { 0.0 },
            if x2 < tx2 { ih } else { 0.0 },
            if y1 > ty1 { -iw } else { 0.0 },
            if y2 < ty2 { iw } else { 0.0 },
        ]
    } else {
        [0.0; 4]
    };
    let d_enclose = [
        if x1 < tx1 { -eh } else { 0.0 },
        if x2 > tx2 { eh } else { 0.0 },
        if y1 < ty1 { -ew } else { 0.0 },
        if y2 > ty2 { ew } else { 0.0 },
    ];
    let mut d_corner = [0.0; 4];
    for k in 0..4 {
        let d_union = d_area[k] - d_inter[k];
        let d_iou = if union > 0.0 {
            (d_inter[k] * union - inter * d_union) / (union * union)
        } else {
            0.0
        };
        d_corner[k] = d_iou + (d_union * enclose - union * d_enclose[k]) / (enclose * enclose);
    }
    let [gx1, gx2, gy1, gy2] = [d_corner[0] * jx1, d_corner[1] * jx2, d_corner[2] * jy1, d_corner[3] * jy2];
    let grad = [gx1 + gx2, gy1 + gy2, 0.5 * (gx2 - gx1), 0.5 * (gy2 - gy1)];
    (giou, grad)
}

/// Generalized IoU in `(-1, 1]`.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    giou_and_grad(a.coords(), b.coords()).0
}

pub fn giou_loss(a: &BBox, b: &BBox) -> f64 {
    1.0 - giou(a, b)
}

/// Plain IoU on clipped corners; zero when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let [ax1, ay1, ax2, ay2] = a.corners();
    let [bx1, by1, bx2, by2] = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Sum of absolute coordinate differences in `(cx, cy, w, h)` form.
pub fn l1_box(a: &BBox, b: &BBox) -> f64 {
    a.coords().iter().zip(b.coords()).map(|(x, y)| math::abs(x - y)).sum()
}

/// Per-frame hand-object graph: slots are left hand, right hand, left
/// object, right object; contact `j` links hand `j` with object `j + 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Haog {
    pub boxes: [BBox; 4],
    pub exists: [bool; 4],
    pub contacts: [bool; 2],
}

impl Haog {
    pub fn empty() -> Self {
        Self { boxes: [BBox::PLACEHOLDER; 4], exists: [false; 4], contacts: [false; 2] }
    }

    /// Checks contact-implies-endpoints and the ground-truth box ranges of
    /// every present slot.
    pub fn validate(&self) -> Result<()> {
        for j in 0..2 {
            if self.contacts[j] && !(self.exists[j] && self.exists[j + 2]) {
                return Err(Error::HaogInvariant("contact requires both hand and object to exist"));
            }
        }
        for (b, &e) in self.boxes.iter().zip(&self.exists) {
            if e {
                BBox::new(b.cx, b.cy, b.w, b.h)?;
            }
        }
        Ok(())
    }

    /// Whether edge `j` has both endpoints present.
    pub fn edge_defined(&self, j: usize) -> bool {
        self.exists[j] && self.exists[j + 2]
    }
}

/// Builds a graph from detected hands and objects when contact is not
/// annotated: every present hand is paired with the object whose center is
/// nearest (lowest index on ties) and marked in contact. Both hands may pick
/// the same object, which is then duplicated into both object slots.
pub fn assign_contacts(hands: [Option<BBox>; 2], objects: &[BBox]) -> Haog {
    let mut g = Haog::empty();
    for (j, hand) in hands.iter().enumerate() {
        let Some(hand) = hand else { continue };
        g.boxes[j] = *hand;
        g.exists[j] = true;
        let nearest = objects
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |best, (i, o)| {
                let d = hand.center_distance(o);
                match best {
                    Some((_, bd)) if bd <= d => best,
                    _ => Some((i, d)),
                }
            });
        if let Some((i, _)) = nearest {
            g.boxes[j + 2] = objects[i];
            g.exists[j + 2] = true;
            g.contacts[j] = true;
        }
    }
    g
}
