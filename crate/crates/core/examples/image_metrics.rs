//! PSNR and SSIM in normalized and HU units, windowed and global.

use cyclefree::ctsim::{eval_pair, SimConfig};
use cyclefree::metrics::{score, SsimMode, Units};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pair = eval_pair(&SimConfig::default(), 11)?;
    for units in [Units::Normalized, Units::Hu] {
        for mode in [SsimMode::Windowed, SsimMode::Global] {
            let (p, s) = score(&pair.noisy, &pair.clean, units, mode)?;
            println!("{units:?} / {mode:?}: PSNR {p:.3} dB, SSIM {s:.4}");
        }
    }
    let (p, s) = score(&pair.clean, &pair.clean, Units::Hu, SsimMode::Windowed)?;
    println!("self comparison: PSNR {p}, SSIM {s}");
    Ok(())
}
