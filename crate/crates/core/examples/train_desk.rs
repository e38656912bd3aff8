//! Short desk-preset training run on a small simulated dataset, followed by
//! an evaluation on the paired eval images. The full desk run (2000
//! iterations on 200 + 200 images) is `cfcg train --preset desk`.
//!
//! `cargo run --example train_desk -- [iterations] [out_dir]`

use std::path::PathBuf;

use cyclefree::cli::{evaluate, Precision};
use cyclefree::ctsim::{build_dataset, DatasetConfig, SeedRange};
use cyclefree::metrics::{SsimMode, Units};
use cyclefree::train::{TrainConfig, TrainData, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let iters: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("cfcg_train_desk"));
    std::fs::create_dir_all(&out)?;

    let ds = build_dataset(&DatasetConfig {
        train_ld: SeedRange { start: 0, count: 40 },
        train_sd: SeedRange { start: 100_000, count: 40 },
        eval: SeedRange { start: 200_000, count: 10 },
        ..DatasetConfig::default()
    })?;
    let mut trainer = Trainer::new(TrainConfig { total_iters: iters, ..TrainConfig::desk() })?;
    let data = TrainData::from_images(&ds.train_ld, &ds.train_sd, trainer.config.generator.levels)?;

    let every = (iters / 10).max(1);
    trainer.run(&data, |_, r| {
        if r.iter % every == 0 || r.iter + 1 == iters {
            println!("iter {:>5}  d {:.4}  g_adv {:.4}  g_id {:.3e}  lr {:.1e}", r.iter, r.d_loss, r.g_adv, r.g_id, r.lr);
        }
        Ok(())
    })?;
    let ckpt = out.join("final.cfcg");
    trainer.save(&ckpt)?;

    let res = evaluate(&trainer.gen, &ds, Units::Hu, SsimMode::Windowed, Precision::F64)?;
    println!(
        "eval: PSNR {:.2} -> {:.2} dB ({:+.2}), SSIM {:.4} -> {:.4} ({:+.4})",
        res.input.psnr_mean_std().0,
        res.output.psnr_mean_std().0,
        res.delta_psnr(),
        res.input.ssim_mean_std().0,
        res.output.ssim_mean_std().0,
        res.delta_ssim()
    );
    println!("checkpoint {}", ckpt.display());
    Ok(())
}
