//! Splits a low-dose image into its wavelet residual and lowband, shows
//! where the energy goes, and checks the transform inverts.

use cyclefree::ctsim::{eval_pair, SimConfig};
use cyclefree::wavelet::{dwt2, idwt2, wavelet_residual, DB3_LOWPASS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = SimConfig::default();
    let pair = eval_pair(&sim, 3)?;
    println!("db3 lowpass taps {DB3_LOWPASS:?}");

    for levels in 1..=4 {
        let p = dwt2(&pair.noisy, levels)?;
        let back = idwt2(&p)?;
        let (residual, lowband) = wavelet_residual(&pair.noisy, levels)?;
        let (lh, lw) = p.lowband_dims();
        println!(
            "J = {levels}: lowband {lh}x{lw}, reconstruction error {:.1e}, residual variance {:.3e}, lowband variance {:.3e}",
            back.max_abs_diff(&pair.noisy)?,
            residual.variance(),
            lowband.variance()
        );
    }

    // noise lives almost entirely in the residual
    let noise = pair.noisy.sub(&pair.clean)?;
    let (r, l) = wavelet_residual(&noise, 2)?;
    println!("noise energy at J = 2: residual {:.3e}, lowband {:.3e}", r.norm_l2().powi(2), l.norm_l2().powi(2));
    Ok(())
}
