use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svit_core::data::randomize_haog;
use svit_core::geometry::{BBox, Haog};
use svit_core::losses::{consistency_loss, edge_loss, haog_loss, node_loss, LossWeights};
use svit_core::model::HaogHeads;
use svit_core::numerics::{Tape, Tensor, Var};

struct Raw {
    boxes: Vec<f64>,
    exist: Vec<f64>,
    contact: Vec<f64>,
}

fn random_raw(rng: &mut ChaCha8Rng) -> Raw {
    Raw {
        boxes: (0..16).map(|_| rng.random_range(0.05..0.95)).collect(),
        exist: (0..4).map(|_| rng.random_range(-3.0..3.0)).collect(),
        contact: (0..4).map(|_| rng.random_range(-3.0..3.0)).collect(),
    }
}

fn heads(tape: &mut Tape, r: &Raw) -> (HaogHeads, Var) {
    let boxes = tape.leaf(Tensor::new(vec![4, 4], r.boxes.clone()).unwrap());
    let exist = tape.leaf(Tensor::new(vec![4, 1], r.exist.clone()).unwrap());
    let contact = tape.leaf(Tensor::new(vec![2, 2], r.contact.clone()).unwrap());
    (HaogHeads { boxes, exist, contact }, boxes)
}

fn random_graph(rng: &mut ChaCha8Rng) -> Haog {
    let mut g = randomize_haog(&Haog::empty(), rng);
    for b in &mut g.boxes {
        // keep targets inside the frame so clipping does not intervene
        b.w = b.w.clamp(0.02, 0.98);
        b.h = b.h.clamp(0.02, 0.98);
        b.cx = b.cx.clamp(b.w / 2.0, 1.0 - b.w / 2.0);
        b.cy = b.cy.clamp(b.h / 2.0, 1.0 - b.h / 2.0);
    }
    g
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Generalized IoU from corners, written out directly.
fn reference_giou(p: &[f64], t: &BBox) -> f64 {
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    let a = [clamp(p[0] - p[2] / 2.0), clamp(p[1] - p[3] / 2.0), clamp(p[0] + p[2] / 2.0), clamp(p[1] + p[3] / 2.0)];
    let b = [t.cx - t.w / 2.0, t.cy - t.h / 2.0, t.cx + t.w / 2.0, t.cy + t.h / 2.0];
    let area = |r: &[f64; 4]| (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0);
    let inter = [a[0].max(b[0]), a[1].max(b[1]), a[2].min(b[2]), a[3].min(b[3])];
    let i = if inter[2] > inter[0] && inter[3] > inter[1] { area(&inter) } else { 0.0 };
    let u = area(&a) + area(&b) - i;
    let c = area(&[a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])]);
    i / u - (c - u) / c
}

fn reference_loss(r: &Raw, g: &Haog, w: &LossWeights) -> f64 {
    let mut nodes = 0.0;
    for i in 0..4 {
        let y = g.exists[i] as u8 as f64;
        nodes += w.bce * (softplus(r.exist[i]) - y * r.exist[i]);
        if g.exists[i] {
            let p = &r.boxes[4 * i..4 * i + 4];
            nodes += w.giou * (1.0 - reference_giou(p, &g.boxes[i]));
            nodes += w.l1 * p.iter().zip(g.boxes[i].coords()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
    }
    let mut edges = 0.0;
    for j in 0..2 {
        if g.exists[j] && g.exists[j + 2] {
            let z = &r.contact[2 * j..2 * j + 2];
            let lse = z[0].max(z[1]) + (-(z[0] - z[1]).abs()).exp().ln_1p();
            edges += lse - z[g.contacts[j] as usize];
        }
    }
    nodes + if w.edges { edges } else { 0.0 }
}

#[test]
fn haog_loss_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for edges in [true, false] {
        let w = LossWeights { edges, ..LossWeights::default() };
        for _ in 0..100 {
            let (r, g) = (random_raw(&mut rng), random_graph(&mut rng));
            let mut tape = Tape::new();
            let (h, _) = heads(&mut tape, &r);
            let terms = haog_loss(&mut tape, &h, &g, &w).unwrap();
            let got = tape.value(terms.total).item();
            let want = reference_loss(&r, &g, &w);
            assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()), "{got} vs {want}");
            assert_eq!(terms.edges.is_some(), edges && (g.edge_defined(0) || g.edge_defined(1)));
        }
    }
}

#[test]
fn absent_boxes_get_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let w = LossWeights::default();
    let eps = 1e-4;
    let mut checked = 0;
    while checked < 100 {
        let (r, g) = (random_raw(&mut rng), random_graph(&mut rng));
        if g.exists.iter().all(|e| *e) {
            continue;
        }
        checked += 1;
        let eval = |boxes: &[f64]| {
            let mut tape = Tape::new();
            let (h, _) = heads(&mut tape, &Raw { boxes: boxes.to_vec(), exist: r.exist.clone(), contact: r.contact.clone() });
            let l = node_loss(&mut tape, &h, &g, &w).unwrap();
            tape.value(l).item()
        };
        let mut tape = Tape::new();
        let (h, boxes) = heads(&mut tape, &r);
        let l = node_loss(&mut tape, &h, &g, &w).unwrap();
        let analytic = tape.backward(l).unwrap().get_or_zero(boxes);
        for i in (0..4).filter(|i| !g.exists[*i]) {
            for k in 0..4 {
                let c = 4 * i + k;
                let (mut hi, mut lo) = (r.boxes.clone(), r.boxes.clone());
                hi[c] += eps;
                lo[c] -= eps;
                let numeric = (eval(&hi) - eval(&lo)) / (2.0 * eps);
                assert!(numeric.abs() <= 1e-10, "slot {i}: {numeric}");
                assert_eq!(analytic.data()[c], 0.0);
            }
        }
    }
}

#[test]
fn undefined_edges_contribute_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let r = random_raw(&mut rng);
    let mut g = Haog::empty();
    g.exists = [true, false, false, true];
    let mut tape = Tape::new();
    let (h, _) = heads(&mut tape, &r);
    assert!(edge_loss(&mut tape, &h, &g).unwrap().is_none());
    g.exists = [true, true, true, false];
    g.boxes = [BBox { cx: 0.5, cy: 0.5, w: 0.2, h: 0.2 }; 4];
    let e = edge_loss(&mut tape, &h, &g).unwrap().unwrap();
    let grads = tape.backward(e).unwrap().get_or_zero(h.contact);
    assert!(grads.row(0).iter().any(|v| *v != 0.0));
    assert!(grads.row(1).iter().all(|v| *v == 0.0));
}

#[test]
fn stop_gradient_blocks_frame_branch() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = tape.leaf(Tensor::new(vec![2, 2], vec![0.0, 2.5, 3.5, 1.0]).unwrap());
    let l = consistency_loss(&mut tape, a, b, true).unwrap();
    assert!((tape.value(l).item() - (1.0 + 0.5 + 0.5 + 3.0) / 4.0).abs() < 1e-15);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get_or_zero(a).data(), &[0.25, -0.25, -0.25, 0.25]);
    assert!(g.get_or_zero(b).data().iter().all(|v| *v == 0.0));
}

proptest! {
    #[test]
    fn node_loss_is_nonnegative_and_zero_only_near_truth(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, g) = (random_raw(&mut rng), random_graph(&mut rng));
        let mut tape = Tape::new();
        let (h, _) = heads(&mut tape, &r);
        let l = node_loss(&mut tape, &h, &g, &LossWeights::default()).unwrap();
        prop_assert!(tape.value(l).item() > 0.0);
    }

    #[test]
    fn consistency_is_symmetric(xs in proptest::collection::vec(-5.0..5.0f64, 8), ys in proptest::collection::vec(-5.0..5.0f64, 8)) {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(vec![2, 4], xs).unwrap());
        let b = tape.constant(Tensor::new(vec![2, 4], ys).unwrap());
        let ab = consistency_loss(&mut tape, a, b, false).unwrap();
        let ba = consistency_loss(&mut tape, b, a, false).unwrap();
        prop_assert_eq!(tape.value(ab).item(), tape.value(ba).item());
        prop_assert!(tape.value(ab).item() >= 0.0);
    }
}

