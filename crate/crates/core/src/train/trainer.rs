use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{lr_schedule, TrainConfig};
use crate::disc::{lsgan_d_loss_tape, lsgan_g_loss_tape, DiscriminatorParams};
use crate::error::{Error, Result};
use crate::invgen::GeneratorParams;
use crate::tensor::{write_ntsr_file, Adam, Dtype, NormMode, Tape, Tensor};
use crate::wavelet::wavelet_residual;

/// Stream of the RNG that draws training samples.
const DATA_STREAM: u64 = 1;

/// Loss scalars of one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iter: u64,
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_id: f64,
    pub lr: f64,
}

impl LossRecord {
    pub const CSV_HEADER: &'static str = "iter,d_loss,g_adv,g_id,lr";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.iter, self.d_loss, self.g_adv, self.g_id, self.lr)
    }

    pub fn is_finite(&self) -> bool {
        self.d_loss.is_finite() && self.g_adv.is_finite() && self.g_id.is_finite()
    }
}

/// Wavelet residuals of the two unpaired training pools.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub ld: Vec<Tensor>,
    pub sd: Vec<Tensor>,
}

impl TrainData {
    /// Precomputes residuals of every image once.
    pub fn from_images(ld: &[Tensor], sd: &[Tensor], levels: usize) -> Result<Self> {
        if ld.is_empty() || sd.is_empty() {
            return Err(Error::InvalidArgument("both training pools need at least one image".into()));
        }
        let res = |pool: &[Tensor]| -> Result<Vec<Tensor>> {
            pool.par_iter().map(|t| Ok(wavelet_residual(t, levels)?.0)).collect()
        };
        Ok(TrainData { ld: res(ld)?, sd: res(sd)? })
    }
}

/// Optimizer states for both networks.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizers {
    pub gen: Adam,
    pub disc: Adam,
}

fn non_finite(iter: u64, what: &str, v: f64) -> Error {
    Error::NonFinite {
        iter,
        detail: format!("{what} = {v}"),
    }
}

/// One cycle-free iteration on residual batches: a discriminator step on
/// `(r_sd, G(r_ld))`, then a generator step on
/// `adv_weight * g_adv + eta * mean|r_ld - G(r_ld)|`. A mixing-matrix update
/// that would make `W` near-singular is rolled back.
pub fn train_step(
    r_ld: &Tensor,
    r_sd: &Tensor,
    gen: &mut GeneratorParams,
    disc: &mut DiscriminatorParams,
    opt: &mut Optimizers,
    cfg: &TrainConfig,
    iter: u64,
) -> Result<LossRecord> {
    let lr = lr_schedule(iter, cfg);

    let mut gtape = Tape::new();
    let gvars = gen.bind(&mut gtape, true, true)?;
    let x = gtape.constant(r_ld.clone());
    let fake = gen.forward_tape(&mut gtape, &gvars, x)?;
    let fake_value = gtape.value(fake).clone();

    // discriminator
    let mut dtape = Tape::new();
    let dvars = disc.bind(&mut dtape, true);
    let real_in = dtape.constant(r_sd.clone());
    let fake_in = dtape.constant(fake_value);
    let real_scores = disc.forward_tape(&mut dtape, &dvars, real_in, NormMode::Train)?;
    let fake_scores = disc.forward_tape(&mut dtape, &dvars, fake_in, NormMode::Train)?;
    let d_loss_var = lsgan_d_loss_tape(&mut dtape, real_scores, fake_scores)?;
    let d_loss = dtape.value(d_loss_var).item()?;
    if !d_loss.is_finite() {
        return Err(non_finite(iter, "d_loss", d_loss));
    }
    dtape.backward(d_loss_var)?;
    let dgrads: Vec<Option<&Tensor>> = dvars.leaves().iter().map(|&v| dtape.grad(v)).collect();
    opt.disc.step(&mut disc.params_mut(), &dgrads, lr)?;
    drop(dtape);

    // generator, against the updated discriminator
    let dconst = disc.bind(&mut gtape, false);
    let scores = disc.forward_tape(&mut gtape, &dconst, fake, NormMode::Train)?;
    let g_adv_var = lsgan_g_loss_tape(&mut gtape, scores);
    let diff = gtape.sub(x, fake)?;
    let diff = gtape.abs(diff);
    let g_id_var = gtape.mean(diff);
    let adv = gtape.scale(g_adv_var, cfg.adv_weight);
    let idt = gtape.scale(g_id_var, cfg.eta);
    let total = gtape.add(adv, idt)?;
    let g_adv = gtape.value(g_adv_var).item()?;
    let g_id = gtape.value(g_id_var).item()?;
    for (name, v) in [("g_adv", g_adv), ("g_id", g_id)] {
        if !v.is_finite() {
            return Err(non_finite(iter, name, v));
        }
    }
    gtape.backward(total)?;
    let ggrads: Vec<Option<&Tensor>> = gvars.leaves().iter().map(|&v| gtape.grad(v)).collect();
    let saved: Vec<Tensor> = gen.blocks.iter().map(|b| b.mix.weight().clone()).collect();
    opt.gen.step(&mut gen.params_mut(), &ggrads, lr)?;
    for (b, old) in gen.blocks.iter_mut().zip(saved) {
        if b.mix.refresh().is_err() {
            *b.mix.weight_mut() = old;
            b.mix.refresh()?;
        }
    }

    Ok(LossRecord { iter, d_loss, g_adv, g_id, lr })
}

/// Complete training state: networks, optimizers, sampling RNG and
/// iteration counter.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub gen: GeneratorParams,
    pub disc: DiscriminatorParams,
    pub opt: Optimizers,
    pub rng: ChaCha8Rng,
    pub iter: u64,
    /// Where the last batch is written if a loss turns non-finite.
    pub dump_dir: Option<PathBuf>,
}

impl Trainer {
    /// Fresh networks drawn from `config.seed`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(config.seed);
        let gen = GeneratorParams::new(config.generator, &mut init);
        let disc = DiscriminatorParams::new(config.disc, &mut init);
        let opt = Optimizers {
            gen: Adam::for_params(gen.params()),
            disc: Adam::for_params(disc.params()),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(DATA_STREAM);
        Ok(Trainer {
            config,
            gen,
            disc,
            opt,
            rng,
            iter: 0,
            dump_dir: None,
        })
    }

    /// Independently drawn low-dose and standard-dose batches.
    pub fn sample_batch(&mut self, data: &TrainData) -> Result<(Tensor, Tensor)> {
        let b = self.config.batch;
        let ld: Vec<Tensor> = (0..b).map(|_| data.ld[self.rng.gen_range(0..data.ld.len())].clone()).collect();
        let sd: Vec<Tensor> = (0..b).map(|_| data.sd[self.rng.gen_range(0..data.sd.len())].clone()).collect();
        Ok((Tensor::stack(&ld)?, Tensor::stack(&sd)?))
    }

    /// One iteration on a freshly sampled batch.
    pub fn step(&mut self, data: &TrainData) -> Result<LossRecord> {
        let (ld, sd) = self.sample_batch(data)?;
        match train_step(&ld, &sd, &mut self.gen, &mut self.disc, &mut self.opt, &self.config, self.iter) {
            Ok(rec) => {
                self.iter += 1;
                Ok(rec)
            }
            Err(Error::NonFinite { iter, detail }) => {
                let detail = match self.dump(&ld, &sd) {
                    Some(Ok(p)) => format!("{detail}; last batch written to {}", p.display()),
                    Some(Err(e)) => format!("{detail}; dumping the batch failed: {e}"),
                    None => detail,
                };
                Err(Error::NonFinite { iter, detail })
            }
            Err(e) => Err(e),
        }
    }

    fn dump(&self, ld: &Tensor, sd: &Tensor) -> Option<Result<PathBuf>> {
        let dir = self.dump_dir.as_ref()?;
        let run = || -> Result<PathBuf> {
            std::fs::create_dir_all(dir).map_err(Error::at_path(dir))?;
            write_ntsr_file(dir.join("nonfinite_ld.ntsr"), ld, Dtype::F64)?;
            write_ntsr_file(dir.join("nonfinite_sd.ntsr"), sd, Dtype::F64)?;
            Ok(dir.clone())
        };
        Some(run())
    }

    /// Runs until `config.total_iters`, calling `on_step` after every
    /// iteration (for logging and checkpoints).
    pub fn run(
        &mut self,
        data: &TrainData,
        mut on_step: impl FnMut(&Trainer, &LossRecord) -> Result<()>,
    ) -> Result<()> {
        while self.iter < self.config.total_iters {
            let rec = self.step(data)?;
            on_step(self, &rec)?;
        }
        Ok(())
    }
}
