//! Cycle-free adversarial training in the wavelet-residual domain, plus the
//! inference maps built on the trained generator.

mod checkpoint;
mod config;
mod ops;
mod trainer;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{lr_schedule, TrainConfig};
pub use ops::{cycle_loss_probe, denoise, identity_loss, synthesize_noise, Denoiser};
pub use trainer::{train_step, LossRecord, Optimizers, TrainData, Trainer};
