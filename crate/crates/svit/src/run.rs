//! Training runs and the ablation matrix.

use std::path::{Path, PathBuf};

use svit_core::model::Model;
use svit_core::train::{evaluate, Metrics, StepReport, TrainConfig, TrainData, Trainer, Variant};

use crate::checkpoint;
use crate::config;
use crate::error::{io_err, Result};
use crate::report::{self, MetricsRow, SummaryRow};

pub const CHECKPOINT: &str = "model.ckpt";
pub const CONFIG: &str = "config.toml";
pub const LOSS: &str = "loss.csv";
pub const METRICS: &str = "metrics.csv";

/// Every frame of every evaluated clip is scored as an image.
pub const FRAME_STRIDE: usize = 1;

/// A finished run: final model, per-step losses and test metrics.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: TrainConfig,
    pub model: Model,
    pub losses: Vec<StepReport>,
    pub test: Metrics,
}

/// Trains `cfg` on `data` and evaluates on the held-out split.
pub fn train(cfg: &TrainConfig, data: &TrainData, mut progress: impl FnMut(&StepReport)) -> Result<RunOutput> {
    let mut t = Trainer::new(cfg, data)?;
    let mut losses = Vec::with_capacity(cfg.steps);
    t.run(|r| {
        progress(r);
        losses.push(r.clone());
    })?;
    let model = t.into_model();
    let test = evaluate(&model, &data.dataset.test, FRAME_STRIDE)?;
    Ok(RunOutput { config: cfg.clone(), model, losses, test })
}

pub fn metrics_row(cfg: &TrainConfig, split: &str, metrics: Metrics) -> MetricsRow {
    MetricsRow { variant: cfg.variant.clone(), seed: cfg.seed, split: split.into(), metrics }
}

/// Writes config, loss trace, test metrics and checkpoint into `dir`.
pub fn write_run(dir: &Path, run: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let put = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(io_err(&p))
    };
    put(CONFIG, config::to_flat_toml(&run.config))?;
    put(LOSS, report::loss_csv(&run.losses))?;
    put(METRICS, report::metrics_csv(&[metrics_row(&run.config, "test", run.test.clone())]))?;
    checkpoint::save(&dir.join(CHECKPOINT), &run.config, &run.model)
}

/// Result of the variant x seed matrix.
#[derive(Clone, Debug)]
pub struct Ablation {
    pub rows: Vec<MetricsRow>,
    pub summary: Vec<SummaryRow>,
}

/// Datasets keyed by the config fields they depend on, so arms that
/// share a world share the episodes.
struct DataCache(Vec<(TrainConfig, TrainData)>);

impl DataCache {
    fn key(c: &TrainConfig) -> TrainConfig {
        TrainConfig {
            world: c.world.clone(),
            train_per_pair: c.train_per_pair,
            test_per_pair: c.test_per_pair,
            image_source: c.image_source,
            other_domain_samples: c.other_domain_samples,
            ..TrainConfig::default()
        }
    }

    fn get(&mut self, c: &TrainConfig) -> Result<usize> {
        let k = Self::key(c);
        if let Some(i) = self.0.iter().position(|(q, _)| *q == k) {
            return Ok(i);
        }
        self.0.push((k, TrainData::generate(c)?));
        Ok(self.0.len() - 1)
    }
}

/// Trains every `(variant, seed)` arm of `base` on up to `jobs` threads
/// and evaluates each on the test split. Row order is variant-major and
/// independent of `jobs`.
pub fn ablate(
    base: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
    jobs: usize,
    progress: impl Fn(&TrainConfig, &Metrics) + Sync,
) -> Result<Ablation> {
    let arms: Vec<TrainConfig> =
        variants.iter().flat_map(|v| seeds.iter().map(move |s| TrainConfig { seed: *s, ..v.configure(base) })).collect();
    let mut cache = DataCache(Vec::new());
    let slots = arms.iter().map(|c| cache.get(c)).collect::<Result<Vec<_>>>()?;
    let jobs = jobs.clamp(1, arms.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<Result<Metrics>>> = Vec::new();
    results.resize_with(arms.len(), || None);
    let results = std::sync::Mutex::new(results);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= arms.len() {
                    break;
                }
                let out = train(&arms[i], &cache.0[slots[i]].1, |_| {}).map(|r| r.test);
                if let Ok(m) = &out {
                    progress(&arms[i], m);
                }
                results.lock().expect("no panics while holding the lock")[i] = Some(out);
            });
        }
    });
    let rows = results
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .zip(&arms)
        .map(|(r, c)| Ok(metrics_row(c, "test", r.expect("every arm ran")?)))
        .collect::<Result<Vec<_>>>()?;
    let summary = report::summarize(&rows);
    Ok(Ablation { rows, summary })
}

/// Summary path next to a metrics CSV: `x.csv` -> `x.summary.csv`.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("ablation");
    out.with_file_name(format!("{stem}.summary.csv"))
}
