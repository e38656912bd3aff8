//! Builds a small unpaired dataset (two training pools from disjoint
//! phantoms plus paired eval images), writes it and loads it back.
//!
//! `cargo run --example build_dataset -- [out_dir]`

use std::path::PathBuf;

use cyclefree::ctsim::{build_dataset, Dataset, DatasetConfig, SeedRange};
use cyclefree::metrics::psnr;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("cfcg_build_dataset"));
    let cfg = DatasetConfig {
        train_ld: SeedRange { start: 0, count: 12 },
        train_sd: SeedRange { start: 100_000, count: 12 },
        eval: SeedRange { start: 200_000, count: 4 },
        ..DatasetConfig::default()
    };
    let ds = build_dataset(&cfg)?;
    ds.write(&out)?;
    let back = Dataset::load(&out)?;
    assert_eq!(back, ds);

    let m = &ds.manifest;
    println!("wrote {} low-dose, {} standard-dose and {} eval images to {}", m.train_ld_count, m.train_sd_count, m.eval_count, out.display());
    println!("low-dose alpha {}, standard-dose alpha {}", cfg.sim.alpha, cfg.sim.sd_alpha);
    for pair in &ds.eval {
        println!("  eval phantom {}: low-dose PSNR {:.2} dB", pair.seed, psnr(&pair.noisy, &pair.clean)?);
    }
    Ok(())
}
