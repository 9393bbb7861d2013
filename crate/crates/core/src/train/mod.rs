//! Training configuration, ablation variants, optimizer, training step and
//! evaluation.

mod config;
mod eval;
mod gradcheck;
mod optim;
mod step;
mod variant;

pub use config::{ConsistencyTarget, OptimConfig, TrainConfig};
pub use eval::{evaluate, oracle_prediction, predict_graph, predict_label, top1, HaogTally, Metrics};
pub use gradcheck::{full_model_grad_check, grad_check_config, loss_grad_check, GradCheckRow, LOSS_NAMES};
pub use optim::AdamW;
pub use step::{train_step, Passes, StepReport, TrainData, Trainer};
pub use variant::{parse_variants, Variant};
