use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svit_core::losses::consistency_loss;
use svit_core::model::{Clip, FrameTime, HaogHead, Model, ModelConfig, Session, TokenBatch, TokenLayout};
use svit_core::numerics::{Tape, Tensor};

fn small(objects: usize) -> ModelConfig {
    ModelConfig {
        d_model: 16,
        depth: 2,
        heads: 2,
        mlp_ratio: 2,
        patch_size: 4,
        frames: 3,
        height: 8,
        width: 8,
        objects,
        haog_head: if objects > 0 { HaogHead::ObjectTokens } else { HaogHead::Pooled },
        ..ModelConfig::default()
    }
}

fn random_clip(cfg: &ModelConfig, frames: usize, seed: u64) -> Clip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = frames * cfg.height * cfg.width * cfg.channels;
    Clip::new(frames, cfg.height, cfg.width, cfg.channels, (0..n).map(|_| rng.random()).collect()).unwrap()
}

fn trained_like(cfg: ModelConfig, seed: u64) -> Model {
    let mut m = Model::new(cfg, seed).unwrap();
    m.randomize(seed, 0.3);
    m
}

fn values(s: &Session<'_>, b: &TokenBatch) -> Vec<f64> {
    s.tape.value(b.tokens).data().to_vec()
}

#[test]
fn image_equals_single_frame_clip_bitwise() {
    for seed in 0..5 {
        let m = trained_like(small(4), seed);
        let clip = random_clip(m.config(), 3, seed);
        for t in 0..3 {
            let image = clip.frame(t);
            let mut s = Session::frozen(&m);
            let a = s.forward_image(&image).unwrap();
            let b = s.forward_clip(&image).unwrap();
            let c = s.forward_frames(&clip).unwrap()[t];
            assert_eq!(values(&s, &a), values(&s, &b));
            assert_eq!(values(&s, &a), values(&s, &c));
        }
    }
}

#[test]
fn consistency_vanishes_on_single_frame_clips() {
    for seed in 0..5 {
        let m = trained_like(small(4), seed);
        let image = random_clip(m.config(), 1, seed + 10);
        let mut s = Session::new(&m);
        let enc = s.forward_clip(&image).unwrap();
        let frames = s.forward_frames(&image).unwrap();
        let clip_tokens = s.f_o(&enc).unwrap();
        let frame_tokens = s.f_o(&frames[0]).unwrap();
        let l = consistency_loss(&mut s.tape, clip_tokens, frame_tokens, false).unwrap();
        assert!(s.tape.value(l).item().abs() <= 1e-12);
    }
}

#[test]
fn multi_frame_clips_are_not_trivially_consistent() {
    let m = trained_like(small(4), 3);
    let clip = random_clip(m.config(), 3, 4);
    let mut s = Session::frozen(&m);
    let enc = s.forward_clip(&clip).unwrap();
    let frames = s.forward_frames(&clip).unwrap();
    let c = s.f_o(&enc).unwrap();
    let per: Vec<_> = frames.iter().map(|f| s.f_o(f).unwrap()).collect();
    let f = s.tape.concat_rows(&per).unwrap();
    let l = consistency_loss(&mut s.tape, c, f, false).unwrap();
    assert!(s.tape.value(l).item() > 1e-3);
}

/// Straight-line softmax attention over `[L, 3d]` rows.
fn naive_attention(qkv: &[f64], l: usize, d: usize, heads: usize) -> Vec<f64> {
    let dh = d / heads;
    let at = |r: usize, c: usize| qkv[r * 3 * d + c];
    let mut out = vec![0.0; l * d];
    for h in 0..heads {
        for i in 0..l {
            let logits: Vec<f64> = (0..l)
                .map(|j| (0..dh).map(|k| at(i, h * dh + k) * at(j, d + h * dh + k)).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
            let total: f64 = e.iter().sum();
            for k in 0..dh {
                out[i * d + h * dh + k] = (0..l).map(|j| e[j] / total * at(j, 2 * d + h * dh + k)).sum();
            }
        }
    }
    out
}

#[test]
fn attention_matches_naive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (l, d, heads) in [(1, 4, 1), (5, 8, 2), (13, 12, 3), (20, 16, 4)] {
        let data: Vec<f64> = (0..l * 3 * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![l, 3 * d], data.clone()).unwrap());
        let y = tape.attention(x, heads).unwrap();
        let reference = naive_attention(&data, l, d, heads);
        for (a, b) in tape.value(y).data().iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn blocks_are_identity_at_initialisation() {
    let m = Model::new(small(4), 1).unwrap();
    let clip = random_clip(m.config(), 2, 2);
    let mut s = Session::frozen(&m);
    let times = [0, 1];
    let x = s.patchify(&clip, &times).unwrap();
    let input = s.assemble(x, &times).unwrap();
    let out = s.encode(input).unwrap();
    assert_eq!(values(&s, &input), values(&s, &out));
}

fn batch_from(tape: &mut Tape, rows: Vec<Vec<f64>>, layout: TokenLayout) -> TokenBatch {
    let d = rows[0].len();
    let tokens = tape.constant(Tensor::new(vec![rows.len(), d], rows.concat()).unwrap());
    TokenBatch { tokens, layout }
}

#[test]
fn f_cls_is_the_patch_mean() {
    let m = Model::new(small(4), 0).unwrap();
    let layout = TokenLayout { frames: 2, patches: 4, objects: 4 };
    let v: Vec<f64> = (0..16).map(|k| k as f64 * 0.25 - 1.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut rows = Vec::new();
    for _t in 0..2 {
        rows.extend((0..4).map(|_| v.clone()));
        rows.extend((0..4).map(|_| (0..16).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>()));
    }
    let mut s = Session::frozen(&m);
    let b = batch_from(&mut s.tape, rows.clone(), layout);
    let cls = s.f_cls(&b).unwrap();
    assert_eq!(s.tape.value(cls).data(), v.as_slice());

    // object rows do not enter the mean
    let mut moved = rows.clone();
    for t in 0..2 {
        for i in 0..4 {
            moved[layout.object_position(t, i)].iter_mut().for_each(|x| *x += 5.0);
        }
    }
    let b2 = batch_from(&mut s.tape, moved, layout);
    let cls2 = s.f_cls(&b2).unwrap();
    assert_eq!(s.tape.value(cls).data(), s.tape.value(cls2).data());
}

#[test]
fn f_cls_ignores_patch_order() {
    let m = Model::new(small(4), 0).unwrap();
    let layout = TokenLayout { frames: 2, patches: 4, objects: 4 };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows: Vec<Vec<f64>> = (0..layout.len()).map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut permuted = rows.clone();
    let patches = layout.patch_positions();
    for (k, p) in patches.iter().enumerate() {
        permuted[*p] = rows[patches[patches.len() - 1 - k]].clone();
    }
    let mut s = Session::frozen(&m);
    let a = batch_from(&mut s.tape, rows, layout);
    let b = batch_from(&mut s.tape, permuted, layout);
    let (ca, cb) = (s.f_cls(&a).unwrap(), s.f_cls(&b).unwrap());
    for (x, y) in s.tape.value(ca).data().iter().zip(s.tape.value(cb).data()) {
        assert!((x - y).abs() <= 1e-14);
    }
}

#[test]
fn contact_head_pairs_hand_with_its_object() {
    let m = trained_like(small(4), 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let base: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let contact_of = |slots: &[f64]| {
        let mut s = Session::frozen(&m);
        let x = s.tape.constant(Tensor::new(vec![4, 16], slots.to_vec()).unwrap());
        let h = s.predict_haog(x).unwrap();
        s.tape.value(h.contact).data().to_vec()
    };
    let reference = contact_of(&base);
    let c = reference.len() / 2;
    for slot in 0..4 {
        let mut moved = base.clone();
        moved[slot * 16..(slot + 1) * 16].iter_mut().for_each(|x| *x += 0.5);
        let out = contact_of(&moved);
        let edge = slot % 2;
        assert_ne!(out[edge * c..(edge + 1) * c], reference[edge * c..(edge + 1) * c], "slot {slot}");
        let other = 1 - edge;
        assert_eq!(out[other * c..(other + 1) * c], reference[other * c..(other + 1) * c], "slot {slot}");
    }
}

#[test]
fn node_heads_are_shared_across_slots() {
    let m = trained_like(small(4), 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let slots: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut swapped = slots.clone();
    swapped[..16].copy_from_slice(&slots[32..48]);
    swapped[32..48].copy_from_slice(&slots[..16]);
    let run = |x: &[f64]| {
        let mut s = Session::frozen(&m);
        let v = s.tape.constant(Tensor::new(vec![4, 16], x.to_vec()).unwrap());
        let h = s.predict_haog(v).unwrap();
        (s.tape.value(h.boxes).clone(), s.tape.value(h.exist).clone())
    };
    let (b0, e0) = run(&slots);
    let (b1, e1) = run(&swapped);
    assert_eq!(b0.row(0), b1.row(2));
    assert_eq!(b0.row(2), b1.row(0));
    assert_eq!(b0.row(1), b1.row(1));
    assert_eq!(e0.row(0), e1.row(2));
    assert_eq!(e0.row(3), e1.row(3));
}

#[test]
fn sequence_lengths_over_grid() {
    for objects in [0, 1, 4] {
        for frames in 1..=3 {
            let mut cfg = small(objects);
            if objects == 1 {
                cfg.haog_head = HaogHead::None;
            }
            let m = Model::new(cfg.clone(), 0).unwrap();
            let clip = random_clip(&cfg, frames, frames as u64);
            let mut s = Session::frozen(&m);
            let enc = s.forward_clip(&clip).unwrap();
            let expect = frames * (cfg.patches_per_frame() + objects);
            assert_eq!(enc.layout.len(), expect);
            assert_eq!(s.tape.shape(enc.tokens), &[expect, cfg.d_model]);
            assert_eq!(cfg.sequence_len(frames), expect);
            let logits = s.clip_logits(&enc).unwrap();
            assert_eq!(s.tape.shape(logits), &[1, cfg.classes]);
        }
    }
}

#[test]
fn clip_index_time_changes_frame_embeddings() {
    let cfg = ModelConfig { frame_time: FrameTime::ClipIndex, ..small(4) };
    let m = trained_like(cfg, 12);
    let clip = random_clip(m.config(), 3, 13);
    let mut s = Session::frozen(&m);
    let frames = s.forward_frames(&clip).unwrap();
    let image = s.forward_image(&clip.frame(2)).unwrap();
    assert_ne!(values(&s, &frames[2]), values(&s, &image));
}

#[test]
fn clips_longer_than_configured_are_rejected() {
    let cfg = small(4);
    let m = Model::new(cfg.clone(), 0).unwrap();
    let clip = random_clip(&cfg, 4, 0);
    assert!(Session::frozen(&m).forward_clip(&clip).is_err());
}
