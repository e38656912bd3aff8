//! Synthetic CT data: ellipse phantoms, parallel-beam projection,
//! Poisson dose reduction and filtered backprojection.

mod dataset;
mod noise;
mod phantom;
mod pgm;
mod projection;

pub use dataset::{
    build_dataset, clean_image, eval_pair, noise_seed, read_manifest, residual_variance, split_pair,
    standard_dose_image,
    Dataset, DatasetConfig, ImagePair, Manifest, SeedRange, SimConfig,
};
pub use noise::{dose_noise, sample_poisson, POISSON_NORMAL_CUTOFF};
pub use phantom::{make_phantom, normalize_hu, to_hu, Ellipse, Phantom, AIR_HU, HU_SCALE, MAX_HU};
pub use pgm::{encode_pgm16, write_pgm16, DIFF_WINDOW_HU, IMAGE_WINDOW_HU};
pub use projection::{default_detector_count, fbp, radon, Dose, SinogramSet, RAY_STEP};
