//! PatchGAN discriminator: patch-map geometry, parameter count and the
//! least-squares losses on real and fake batches.

use cyclefree::disc::{discriminate, lsgan_d_loss, lsgan_g_loss, DiscConfig, DiscriminatorParams};
use cyclefree::tensor::{Shape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = DiscConfig::default();
    let d = DiscriminatorParams::new(cfg, &mut rng);
    println!("widths {:?}, {} parameters, smallest input {}", cfg.widths, d.parameter_count(), cfg.min_input_size());
    for n in [16, 64, 128] {
        println!("  {n}x{n} input -> {:?} patch map", cfg.output_size(n, n));
    }

    let real = Tensor::randn(Shape::new(2, 1, 64, 64), 0.02, &mut rng);
    let fake = Tensor::randn(Shape::new(2, 1, 64, 64), 0.1, &mut rng);
    let (sr, sf) = (discriminate(&real, &d)?, discriminate(&fake, &d)?);
    println!("score map shape {:?}", sr.shape());
    println!("discriminator loss {:.4}, generator adversarial loss {:.4}", lsgan_d_loss(&sr, &sf), lsgan_g_loss(&sf));
    Ok(())
}
