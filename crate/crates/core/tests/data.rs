use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svit_core::data::{
    episode, generate_sample, make_compositional_split, randomize_haog, Dataset, Domain, Sprite, WorldConfig,
};
use svit_core::geometry::{BBox, Haog};

fn world(frames: usize) -> WorldConfig {
    WorldConfig { frames, ..WorldConfig::default() }
}

fn mask_box(mask: &[(usize, usize)], canvas: usize) -> BBox {
    let s = canvas as f64;
    let x1 = mask.iter().map(|p| p.0).min().unwrap() as f64;
    let x2 = mask.iter().map(|p| p.0).max().unwrap() as f64 + 1.0;
    let y1 = mask.iter().map(|p| p.1).min().unwrap() as f64;
    let y2 = mask.iter().map(|p| p.1).max().unwrap() as f64 + 1.0;
    BBox::from_corners(x1 / s, y1 / s, x2 / s, y2 / s)
}

fn close(a: &BBox, b: &BBox, tol: f64) -> bool {
    a.coords().iter().zip(b.coords()).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn annotations_match_pixel_masks() {
    for canvas in [32, 48] {
        let cfg = WorldConfig { canvas, ..world(6) };
        let tol = 1.0 / canvas as f64;
        for seed in 0..60u64 {
            let (verb, noun) = ((seed % 6) as usize, ((seed / 6) % 6) as usize);
            let ep = episode(&cfg, verb, noun, seed).unwrap();
            let s = generate_sample(&cfg, verb, noun, seed).unwrap();
            for t in 0..cfg.frames {
                let g = &s.haogs[t];
                let sc = &ep.scenes[t];
                let hand = ep.side;
                // the acting hand is drawn last: its exact color marks its pixels
                let color = sc.acting.color;
                let painted: Vec<(usize, usize)> = (0..canvas)
                    .flat_map(|y| (0..canvas).map(move |x| (x, y)))
                    .filter(|&(x, y)| (0..3).all(|c| s.frames.pixel(t, y, x, c) == color[c] as f32 as f64))
                    .collect();
                assert!(close(&mask_box(&painted, canvas), &g.boxes[hand], tol));
                assert!(close(&mask_box(&sc.object.mask(canvas), canvas), &g.boxes[hand + 2], tol));
                if let Some(idle) = &sc.idle {
                    assert!(close(&mask_box(&idle.mask(canvas), canvas), &g.boxes[1 - hand], tol));
                }
                g.validate().unwrap();
            }
        }
    }
}

fn center_distance_px(a: &Sprite, b: &Sprite) -> f64 {
    let c = |s: &Sprite| (s.x as f64 + 0.5 * s.w as f64, s.y as f64 + 0.5 * s.h as f64);
    let ((ax, ay), (bx, by)) = (c(a), c(b));
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

#[test]
fn contact_frames_are_close() {
    let cfg = world(8);
    for seed in 0..120u64 {
        let verb = (seed % 6) as usize;
        let ep = episode(&cfg, verb, (seed % 5) as usize, seed).unwrap();
        for sc in &ep.scenes {
            if sc.contact {
                assert!(center_distance_px(&sc.acting, &sc.object) < cfg.contact_threshold);
            }
            if let Some(idle) = &sc.idle {
                assert!(center_distance_px(idle, &sc.object) > cfg.contact_threshold);
            }
        }
    }
}

#[test]
fn contact_patterns_per_verb() {
    let cfg = world(8);
    for seed in 0..30u64 {
        for verb in 0..6 {
            let s = generate_sample(&cfg, verb, (seed % 6) as usize, seed).unwrap();
            let side = if s.haogs[0].exists[0] && s.haogs[0].exists[2] { 0 } else { 1 };
            let flags: Vec<bool> = s.haogs.iter().map(|g| g.contacts[side]).collect();
            match verb {
                2 => {
                    assert!(!flags[0], "approach starts apart");
                    assert!(*flags.last().unwrap(), "approach ends in contact");
                    let first = flags.iter().position(|c| *c).unwrap();
                    assert!(flags[first..].iter().all(|c| *c), "contact persists once made");
                }
                5 => assert!(flags.iter().all(|c| !c)),
                _ => assert!(flags.iter().all(|c| *c)),
            }
            assert!(s.haogs.iter().all(|g| !g.contacts[1 - side]));
        }
    }
}

#[test]
fn generation_is_deterministic() {
    for domain in [Domain::Primary, Domain::Other] {
        let cfg = WorldConfig { domain, ..world(4) };
        let a = generate_sample(&cfg, 3, 2, 77).unwrap();
        let b = generate_sample(&cfg, 3, 2, 77).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.frames, generate_sample(&cfg, 3, 2, 78).unwrap().frames);
    }
    let w = world(3);
    assert_eq!(Dataset::generate(&w, 2, 1).unwrap(), Dataset::generate(&w, 2, 1).unwrap());
}

#[test]
fn compositional_split_over_seeds() {
    for seed in 0..100 {
        let s = make_compositional_split(6, 6, seed).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (18, 18));
        let train: HashSet<_> = s.train.iter().copied().collect();
        let test: HashSet<_> = s.test.iter().copied().collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), 36);
        for k in 0..6 {
            assert!(train.iter().any(|p| p.0 == k) && test.iter().any(|p| p.0 == k), "verb {k}");
            assert!(train.iter().any(|p| p.1 == k) && test.iter().any(|p| p.1 == k), "noun {k}");
        }
    }
}

#[test]
fn split_differs_across_seeds() {
    let distinct: HashSet<_> = (0..20).map(|s| make_compositional_split(6, 6, s).unwrap().train).collect();
    assert!(distinct.len() > 10);
}

#[test]
fn random_graphs_are_valid_fair_coins() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n = 10_000;
    let mut exists = [0usize; 4];
    let (mut defined, mut contacts) = (0usize, 0usize);
    for _ in 0..n {
        let g = randomize_haog(&Haog::empty(), &mut rng);
        g.validate().unwrap();
        for i in 0..4 {
            exists[i] += g.exists[i] as usize;
        }
        for j in 0..2 {
            if g.edge_defined(j) {
                defined += 1;
                contacts += g.contacts[j] as usize;
            } else {
                assert!(!g.contacts[j]);
            }
        }
    }
    for e in exists {
        assert!((e as f64 / n as f64 - 0.5).abs() <= 0.03);
    }
    assert!((contacts as f64 / defined as f64 - 0.5).abs() <= 0.03);
}

#[test]
fn labels_are_balanced() {
    let w = world(2);
    let d = Dataset::generate(&w, 56, 1).unwrap();
    assert!(d.train.len() >= 1000);
    for verb in 0..6 {
        let f = d.train.iter().filter(|s| s.label == verb).count() as f64 / d.train.len() as f64;
        assert!((f - 1.0 / 6.0).abs() <= 0.1 / 6.0, "verb {verb}: {f}");
    }
    for s in d.train.iter().chain(&d.test) {
        assert_eq!(s.label, s.verb);
        assert_eq!(s.haogs.len(), w.frames);
    }
}
