//! Adversarial objectives, Adam, the alternating training loop and
//! checkpointing.

mod adam;
mod checkpoint;
mod config;
mod loss;
mod record;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{LossMode, TrainConfig};
pub use loss::{d_loss, g_feature_match_loss, g_final_loss, g_perceptual_loss};
pub use record::{loss_csv, parse_loss_csv, LossRecord, LOSS_CSV_HEADER};
pub use trainer::{gather, train, TrainObserver, Trainer};
