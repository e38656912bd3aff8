//! Structural self-checks on a generator plus its complexity summary, the
//! same report `cfcg verify` and `cfcg info` print.

use cyclefree::cli::{random_generator, verify_generator, ModelInfo, RunConfig};
use cyclefree::disc::DiscConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for preset in ["desk", "paper"] {
        let cfg = RunConfig::preset(preset)?;
        let gen = random_generator(&cfg, 0);
        let disc: DiscConfig = cfg.train.disc;
        let info = ModelInfo::new(&gen, &disc, disc.parameter_count());
        println!("== {preset} preset\n{}\n", info.to_text());
    }

    let cfg = RunConfig::preset("desk")?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..2 {
        let gen = random_generator(&cfg, seed);
        let report = verify_generator(format!("random desk draw {seed}"), &gen, 64, &mut rng);
        print!("{}", report.to_text());
    }
    Ok(())
}
