//! The training loop, learning-rate schedule and checkpoints.

pub mod checkpoint;
pub mod schedule;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, EpochMetrics, RngState};
pub use schedule::{lr_at, lr_schedule};
pub use trainer::{metrics_tsv, resume, resume_with, run_to_dir, train, train_step, Trainer};
