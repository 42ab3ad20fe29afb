//! Objective, gradients, optimizer and the training loop.

pub mod adam;
pub mod config;
pub mod loss;
pub mod objective;
pub mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::{apply_override, load_config_value, RunConfig, Schedule, TrainConfig, REFERENCE_STEPS};
pub use loss::{eval_psnr, loss_color, loss_tv, loss_uv, psnr_from_mse};
pub use objective::{total_objective, Objective, ObjectiveSettings, ObjectiveTerms};
pub use trainer::{build_pool, train, MetricsRow, Trainer};
