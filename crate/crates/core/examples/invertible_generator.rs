//! The invertible generator: exact inverse, log-determinant from the mixes
//! alone, parameter count and a Lipschitz bound.

use cyclefree::invgen::{GeneratorConfig, GeneratorParams, MixInit};
use cyclefree::tensor::{Shape, Tensor};
use cyclefree::train::{cycle_loss_probe, Denoiser};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cfg = GeneratorConfig { blocks: 4, width: 32, levels: 2, mix_init: MixInit::NearIdentity { noise: 0.3 } };
    let mut g = GeneratorParams::new(cfg, &mut rng);
    // freshly initialized output layers are zero; give them weights so the
    // coupling steps do something
    g.randomize_outputs(0.1, &mut rng);
    println!("{} parameters (closed form {})", g.parameter_count(), cfg.parameter_count());

    let r = Tensor::randn(Shape::new(1, 1, 64, 64), 0.3, &mut rng);
    let d64 = Denoiser::<f64>::new(&g)?;
    let y = d64.forward(&r)?;
    println!("|G(r) - r|_inf        = {:.3e}", y.max_abs_diff(&r)?);
    println!("|G^-1(G(r)) - r|_inf  = {:.3e} (f64)", d64.inverse(&y)?.max_abs_diff(&r)?);
    let d32 = Denoiser::<f32>::new(&g)?;
    println!("|G^-1(G(r)) - r|_inf  = {:.3e} (f32)", d32.inverse(&d32.forward(&r)?)?.max_abs_diff(&r)?);

    let other = Tensor::randn(r.shape(), 0.3, &mut rng);
    println!("cycle loss            = {:.3e}", cycle_loss_probe::<f64>(&r, &other, &g)?);
    println!("|det W_i|             = {:?}", g.mix_determinants());
    println!("log|det dG/dr| at 64x64 = {:.6}", g.log_det(64, 64)?);
    println!("Lipschitz bound       = {:.3e}", g.lipschitz_bound());
    Ok(())
}
