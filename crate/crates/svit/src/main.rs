use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svit::error::{io_err, Error, Result};
use svit::{checkpoint, config, dataset, inspect, report, run};
use svit_core::data::Dataset;
use svit_core::train::{evaluate, full_model_grad_check, loss_grad_check, parse_variants, TrainData, Variant, LOSS_NAMES};

/// Shared video & image transformer with object tokens: data generation,
/// training, evaluation, ablations and diagnostics.
#[derive(Parser)]
#[command(name = "svit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the compositional dataset into a directory.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one variant and write config, losses, metrics and checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "full")]
        variant: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Print a loss line every this many steps (0 = quiet).
        #[arg(long, default_value_t = 100)]
        log_every: usize,
    },
    /// Evaluate a checkpoint on a dataset directory; prints a metrics CSV.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train every variant x seed and write per-run and summary CSVs.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "baseline,mt,ot,full,patch_con,random_haog")]
        variants: String,
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; runs are independent.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare reverse-mode gradients with central differences.
    GradCheck {
        /// Differentiate through the whole model instead of the loss inputs.
        #[arg(long)]
        full_model: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Write SVG overlays of one sample's predicted graphs.
    Inspect {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        sample: String,
        #[arg(long)]
        out: PathBuf,
        /// Dataset directory holding the sample; regenerated from the
        /// checkpoint's config when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn parse_seeds(list: &str) -> Result<Vec<u64>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|e| Error::Usage(format!("seed {s:?}: {e}"))))
        .collect()
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData { config, out } => {
            let cfg = config::load(&config)?;
            cfg.world.validate()?;
            let data = Dataset::generate(&cfg.world, cfg.train_per_pair, cfg.test_per_pair)?;
            let m = dataset::write(&out, &data)?;
            println!("{{\"samples\":{},\"train\":{},\"test\":{}}}", m.samples.len(), data.train.len(), data.test.len());
        }
        Command::Train { config, variant, seed, out, log_every } => {
            let base = config::load(&config)?;
            let cfg = svit_core::train::TrainConfig { seed, ..Variant::parse(&variant)?.configure(&base) };
            cfg.validate()?;
            let data = TrainData::generate(&cfg)?;
            let r = run::train(&cfg, &data, |s| {
                if log_every > 0 && (s.step + 1) % log_every == 0 {
                    let l = &s.loss;
                    eprintln!("step {} vid {:.4} haog {:.4} con {:.4} total {:.4} lr {:.2e}", s.step + 1, l.vid, l.haog, l.con, l.total, s.lr);
                }
            })?;
            run::write_run(&out, &r)?;
            print!("{}", report::metrics_csv(&[run::metrics_row(&r.config, "test", r.test.clone())]));
        }
        Command::Eval { ckpt, data, split } => {
            let c = checkpoint::load(&ckpt)?;
            let tag = dataset::parse_split(&split)?;
            let (m, samples) = dataset::read_split(&data, tag)?;
            let mc = c.model.config();
            if m.world.canvas != mc.height || m.world.frames > mc.frames || m.world.channels != mc.channels {
                return Err(Error::Usage(format!(
                    "dataset ({}px, {} frames) does not fit the model ({}px, {} frames)",
                    m.world.canvas, m.world.frames, mc.height, mc.frames
                )));
            }
            let metrics = evaluate(&c.model, &samples, run::FRAME_STRIDE)?;
            print!("{}", report::metrics_csv(&[run::metrics_row(&c.config, &split, metrics)]));
        }
        Command::Ablate { config, variants, seeds, out, jobs } => {
            let base = config::load(&config)?;
            let variants = parse_variants(&variants)?;
            let seeds = parse_seeds(&seeds)?;
            if variants.is_empty() || seeds.is_empty() {
                return Err(Error::Usage("need at least one variant and one seed".into()));
            }
            let a = run::ablate(&base, &variants, &seeds, jobs, |c, m| eprintln!("{} seed {} top1 {:.4}", c.variant, c.seed, m.top1))?;
            std::fs::write(&out, report::metrics_csv(&a.rows)).map_err(io_err(&out))?;
            let sp = run::summary_path(&out);
            let summary = report::summary_csv(&a.summary);
            std::fs::write(&sp, &summary).map_err(io_err(&sp))?;
            print!("{summary}");
        }
        Command::GradCheck { full_model, seed, eps, tol } => {
            let rows = if full_model { full_model_grad_check(seed, eps)? } else { loss_grad_check(seed, eps)? };
            println!("loss,max_rel_error,coordinates,pass");
            let mut ok = true;
            for r in &rows {
                let pass = r.max_rel_error <= tol;
                ok &= pass;
                println!("{},{:e},{},{}", r.loss, r.max_rel_error, r.coordinates, pass);
            }
            debug_assert_eq!(rows.len(), LOSS_NAMES.len());
            if !ok {
                return Err(Error::Usage(format!("gradient check exceeded tolerance {tol:e}")));
            }
        }
        Command::Inspect { ckpt, sample, out, data } => {
            let c = checkpoint::load(&ckpt)?;
            let s = match data {
                Some(dir) => dataset::read_sample(&dir, &sample)?,
                None => {
                    let d = Dataset::generate(&c.config.world, c.config.train_per_pair, c.config.test_per_pair)?;
                    d.train
                        .into_iter()
                        .chain(d.test)
                        .find(|s| s.id == sample)
                        .ok_or_else(|| Error::Usage(format!("no sample {sample:?} in the checkpoint's dataset")))?
                }
            };
            for p in inspect::inspect(&c.model, &s, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report_line());
            ExitCode::FAILURE
        }
    }
}
