//! Denoising with `G` and noise synthesis with `G^-1` from one model.
//! Loads a checkpoint if one is given, otherwise trains a small model for a
//! hundred iterations first.
//!
//! `cargo run --example denoise_synthesize -- [checkpoint]`

use cyclefree::ctsim::{build_dataset, eval_pair, residual_variance, standard_dose_image, DatasetConfig, SeedRange};
use cyclefree::metrics::psnr;
use cyclefree::train::{Denoiser, TrainConfig, TrainData, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trainer = match std::env::args().nth(1) {
        Some(path) => Trainer::load(path)?,
        None => {
            let ds = build_dataset(&DatasetConfig {
                train_ld: SeedRange { start: 0, count: 16 },
                train_sd: SeedRange { start: 100_000, count: 16 },
                eval: SeedRange { start: 200_000, count: 0 },
                ..DatasetConfig::default()
            })?;
            let mut t = Trainer::new(TrainConfig { total_iters: 100, lr: 1e-3, ..TrainConfig::desk() })?;
            let data = TrainData::from_images(&ds.train_ld, &ds.train_sd, t.config.generator.levels)?;
            t.run(&data, |_, _| Ok(()))?;
            t
        }
    };
    let levels = trainer.gen.config.levels;
    let sim = cyclefree::ctsim::SimConfig::default();
    let model = Denoiser::<f64>::new(&trainer.gen)?;
    let model32 = Denoiser::<f32>::new(&trainer.gen)?;

    for seed in [200_000, 200_001, 200_002] {
        let pair = eval_pair(&sim, seed)?;
        let den = model.denoise(&pair.noisy)?;
        println!(
            "phantom {seed}: low-dose PSNR {:.2} dB, denoised {:.2} dB",
            psnr(&pair.noisy, &pair.clean)?,
            psnr(&den, &pair.clean)?
        );
        let sd = standard_dose_image(&sim, seed)?;
        let synth = model.synthesize_noise(&sd)?;
        println!(
            "  residual variance: standard dose {:.3e}, with synthesized noise {:.3e}",
            residual_variance(&sd, levels)?,
            residual_variance(&synth, levels)?
        );
        let back = model32.denoise(&model32.synthesize_noise(&sd)?)?;
        println!("  f32 |denoise(synthesize(x)) - x|_inf = {:.2e}", back.max_abs_diff(&sd)?);
    }
    Ok(())
}
