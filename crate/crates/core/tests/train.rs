use svit_core::data::{BatchStream, ImageRef, MixedBatch, WorldConfig};
use svit_core::model::{Model, ModelConfig};
use svit_core::train::{evaluate, train_step, AdamW, OptimConfig, TrainConfig, TrainData, Trainer, Variant};
use svit_core::Error;

/// A task small enough for a few hundred steps in a test.
fn tiny(steps: usize) -> TrainConfig {
    let (canvas, frames) = (16, 3);
    TrainConfig {
        model: ModelConfig {
            d_model: 16,
            depth: 1,
            heads: 2,
            mlp_ratio: 2,
            patch_size: 8,
            frames,
            height: canvas,
            width: canvas,
            init_std: 0.2,
            ..ModelConfig::default()
        },
        world: WorldConfig { canvas, frames, ..WorldConfig::default() },
        optim: OptimConfig { lr: 3e-3, clip_norm: 0.0, ..OptimConfig::default() },
        steps,
        warmup_steps: 10,
        video_bs: 4,
        image_bs: 4,
        train_per_pair: 2,
        test_per_pair: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn untrained_model_is_at_chance() {
    let cfg = TrainConfig { test_per_pair: 28, ..tiny(20) };
    let data = TrainData::generate(&cfg).unwrap();
    assert!(data.dataset.test.len() >= 500);
    for seed in 0..3 {
        let m = Model::new(cfg.model.clone(), seed).unwrap();
        let acc = evaluate(&m, &data.dataset.test, 1).unwrap().top1;
        assert!((acc - 1.0 / 6.0).abs() <= 0.05, "seed {seed}: {acc}");
    }
}

#[test]
fn loss_decreases_over_first_200_steps() {
    let mut early = 0.0;
    let mut late = 0.0;
    for seed in 0..3 {
        let cfg = TrainConfig { seed, ..Variant::Full.configure(&tiny(200)) };
        let data = TrainData::generate(&cfg).unwrap();
        let mut t = Trainer::new(&cfg, &data).unwrap();
        let mut totals = Vec::new();
        t.run(|r| totals.push(r.loss.total)).unwrap();
        early += totals[..20].iter().sum::<f64>() / 20.0;
        late += totals[180..].iter().sum::<f64>() / 20.0;
    }
    // the smoke run drops to about 0.81 of the initial level
    assert!(late < 0.9 * early, "early {early} late {late}");
}

#[test]
fn full_step_runs_three_pass_kinds() {
    let cfg = Variant::Full.configure(&tiny(20));
    let data = TrainData::generate(&cfg).unwrap();
    let mut t = Trainer::new(&cfg, &data).unwrap();
    let r = t.step().unwrap();
    assert_eq!(r.passes.kinds(), 3);
    assert_eq!((r.passes.clip, r.passes.frames, r.passes.images), (4, 4, 4));
    assert!(r.loss.con > 0.0 && r.loss.haog > 0.0 && r.loss.vid > 0.0);
}

#[test]
fn video_only_step_touches_only_video_loss() {
    let mut cfg = Variant::Full.configure(&tiny(20));
    cfg.loss.con = 0.0;
    cfg.image_bs = 0;
    let data = TrainData::generate(&cfg).unwrap();
    let mut t = Trainer::new(&cfg, &data).unwrap();
    let before = t.model().clone();
    let r = t.step().unwrap();
    assert_eq!((r.passes.frames, r.passes.images), (0, 0));
    assert_eq!((r.loss.con, r.loss.haog), (0.0, 0.0));
    assert_eq!(r.loss.total, r.loss.vid);
    // graph heads receive no gradient; only weight decay could move them
    for (a, b) in before.params().iter().zip(t.model().params()) {
        if a.name.starts_with("haog.") && !a.decay {
            assert_eq!(a.value, b.value, "{}", a.name);
        }
    }
}

#[test]
fn sparse_image_ratio_is_supported() {
    let cfg = TrainConfig { video_bs: 10, image_bs: 1, ..Variant::Full.configure(&tiny(20)) };
    let data = TrainData::generate(&cfg).unwrap();
    let r = Trainer::new(&cfg, &data).unwrap().step().unwrap();
    assert_eq!((r.passes.clip, r.passes.images), (10, 1));
}

#[test]
fn runs_repeat_exactly() {
    let cfg = TrainConfig { seed: 4, ..Variant::Full.configure(&tiny(30)) };
    let data = TrainData::generate(&cfg).unwrap();
    let trace = || {
        let mut t = Trainer::new(&cfg, &data).unwrap();
        let mut out = Vec::new();
        t.run(|r| out.push(r.clone())).unwrap();
        (out, t.into_model())
    };
    let (a, ma) = trace();
    let (b, mb) = trace();
    assert_eq!(a, b);
    assert_eq!(ma.params(), mb.params());
}

#[test]
fn random_graphs_change_only_the_annotation_stream() {
    let base = tiny(20);
    let full = Variant::Full.configure(&base);
    let random = Variant::RandomHaog.configure(&base);
    let data = TrainData::generate(&full).unwrap();
    let rf = Trainer::new(&full, &data).unwrap().step().unwrap();
    let rr = Trainer::new(&random, &data).unwrap().step().unwrap();
    assert_eq!(rf.loss.vid, rr.loss.vid);
    assert_eq!(rf.loss.con, rr.loss.con);
    assert_eq!(rf.passes, rr.passes);
    assert_ne!(rf.loss.haog, rr.loss.haog);
}

#[test]
fn shared_parameters_start_identical_across_variants() {
    let base = tiny(20);
    let ot = Model::new(Variant::Ot.configure(&base).model, 7).unwrap();
    let baseline = Model::new(Variant::Baseline.configure(&base).model, 7).unwrap();
    let mut shared = 0;
    for p in baseline.params() {
        if let Some(q) = ot.param(&p.name) {
            assert_eq!(p.value, q.value, "{}", p.name);
            shared += 1;
        }
    }
    assert_eq!(shared, baseline.params().len());
}

#[test]
fn non_finite_loss_names_component_and_step() {
    let cfg = Variant::Full.configure(&tiny(20));
    let data = TrainData::generate(&cfg).unwrap();
    let mut model = Model::new(cfg.model.clone(), 0).unwrap();
    model.param_mut("cls.bias").unwrap().value.data_mut()[0] = f64::NAN;
    let mut opt = AdamW::new(cfg.optim.clone(), &model);
    let batch = MixedBatch { videos: vec![0], images: vec![ImageRef { sample: 0, frame: 0 }], epoch: 0, epoch_end: false };
    match train_step(&mut model, &mut opt, &cfg, &data, &batch, 5) {
        Err(Error::NonFiniteLoss { component, step }) => assert_eq!((component, step), ("vid", 5)),
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn batch_stream_rejects_empty_enabled_pool() {
    assert!(BatchStream::new(0, vec![], 2, 0, 0).is_err());
    assert!(BatchStream::new(4, vec![], 2, 2, 0).is_err());
    assert!(BatchStream::new(4, vec![], 2, 0, 0).is_ok());
}

#[test]
fn schedule_peaks_after_warmup_and_decays() {
    let c = tiny(200);
    assert_eq!(c.lr_at(c.warmup_steps), c.optim.lr);
    let lrs: Vec<f64> = (c.warmup_steps..c.steps).map(|s| c.lr_at(s)).collect();
    assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    assert!(*lrs.last().unwrap() < 1e-3 * c.optim.lr);
}
