use serde::{Deserialize, Serialize};

use crate::disc::DiscConfig;
use crate::error::{Error, Result};
use crate::invgen::{GeneratorConfig, MixInit};

/// Hyper-parameters of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the identity term.
    pub eta: f64,
    /// Weight of the adversarial term (2 in the cycle-free objective).
    pub adv_weight: f64,
    pub lr: f64,
    pub lr_halving_period: u64,
    pub total_iters: u64,
    pub batch: usize,
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub disc: DiscConfig,
    /// Write a checkpoint every this many iterations.
    pub checkpoint_period: u64,
}

impl TrainConfig {
    /// Full-size settings: L = 4, c = 256, J = 6, 150k iterations.
    pub fn paper() -> Self {
        TrainConfig {
            eta: 10.0,
            adv_weight: 2.0,
            lr: 1e-4,
            lr_halving_period: 50_000,
            total_iters: 150_000,
            batch: 1,
            seed: 0,
            generator: GeneratorConfig {
                blocks: 4,
                width: 256,
                levels: 6,
                mix_init: MixInit::NearIdentity { noise: 0.01 },
            },
            disc: DiscConfig::default(),
            checkpoint_period: 10_000,
        }
    }

    /// Small settings for 64x64 images: c = 32, J = 2, 2000 iterations.
    pub fn desk() -> Self {
        TrainConfig {
            total_iters: 2_000,
            lr: 1e-4,
            lr_halving_period: 50_000,
            generator: GeneratorConfig {
                width: 32,
                levels: 2,
                ..TrainConfig::paper().generator
            },
            checkpoint_period: 500,
            ..TrainConfig::paper()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Config(format!("unknown preset {other:?}; expected \"desk\" or \"paper\""))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.eta >= 0.0) || !(self.adv_weight >= 0.0) {
            return bad(format!("loss weights must be non-negative (eta {}, adv_weight {})", self.eta, self.adv_weight));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.lr_halving_period == 0 || self.checkpoint_period == 0 {
            return bad("periods must be at least 1".into());
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        let g = &self.generator;
        if g.blocks == 0 || g.width == 0 || g.levels == 0 {
            return bad("generator blocks, width and levels must be positive".into());
        }
        if self.disc.widths.contains(&0) || self.disc.kernel == 0 {
            return bad("discriminator widths and kernel must be positive".into());
        }
        Ok(())
    }
}

/// `lr * 0.5^floor(iter / period)`.
pub fn lr_schedule(iter: u64, cfg: &TrainConfig) -> f64 {
    let halvings = iter / cfg.lr_halving_period.max(1);
    cfg.lr * 0.5f64.powi(halvings.min(i32::MAX as u64) as i32)
}
