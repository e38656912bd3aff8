use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::projection::{Dose, SinogramSet};
use crate::error::{Error, Result};

/// Means at or above this use the normal approximation.
pub const POISSON_NORMAL_CUTOFF: f64 = 50.0;

/// Poisson draw: sequential inversion for small means, rounded normal
/// approximation otherwise.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean < POISSON_NORMAL_CUTOFF {
        let u: f64 = rng.gen();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf && p > 0.0 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        k as f64
    } else {
        let z: f64 = StandardNormal.sample(rng);
        (mean + mean.sqrt() * z).round().max(0.0)
    }
}

/// Reduced-dose projections: photon counts `Poisson(I0 alpha exp(-p))`,
/// clamped to at least one, converted back to line integrals.
pub fn dose_noise(sino: &SinogramSet, i0: f64, alpha: f64, seed: u64) -> Result<SinogramSet> {
    if !(i0 > 0.0 && i0.is_finite()) {
        return Err(Error::InvalidArgument(format!("source intensity must be positive, got {i0}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("dose fraction must lie in (0, 1], got {alpha}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blank = i0 * alpha;
    let data = sino
        .data
        .iter()
        .map(|&p| {
            let counts = sample_poisson(blank * (-p).exp(), &mut rng).max(1.0);
            -(counts / blank).ln()
        })
        .collect();
    Ok(SinogramSet {
        data,
        dose: Some(Dose { i0, alpha, seed }),
        ..sino.clone()
    })
}
