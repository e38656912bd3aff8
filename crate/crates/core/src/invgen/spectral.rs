use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{bilinear, normalize, power_iteration_step};
use crate::tensor::Tensor;

/// Power iterations run when a spectral-norm state is created.
pub const SN_WARMUP_ITERS: usize = 50;

/// Persistent singular-vector estimates for one spectrally normalized
/// weight, viewed as an `(out, in*kh*kw)` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

fn matrix_dims(weight: &Tensor) -> (usize, usize) {
    let rows = weight.shape().batch;
    (rows, weight.numel() / rows)
}

impl SpectralState {
    /// Random unit `u`, followed by `warmup` power iterations.
    pub fn new<R: Rng + ?Sized>(weight: &Tensor, warmup: usize, rng: &mut R) -> Self {
        let (rows, cols) = matrix_dims(weight);
        let mut u: Vec<f64> = (0..rows)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        normalize(&mut u);
        let mut state = SpectralState {
            u,
            v: vec![0.0; cols],
        };
        state.warmup(weight, warmup.max(1));
        state
    }

    pub fn power_step(&mut self, weight: &Tensor) {
        let (rows, cols) = matrix_dims(weight);
        power_iteration_step(weight.data(), rows, cols, &mut self.u, &mut self.v);
    }

    pub fn warmup(&mut self, weight: &Tensor, iters: usize) {
        for _ in 0..iters {
            self.power_step(weight);
        }
    }

    /// Current estimate `u^T W v` of the top singular value.
    pub fn sigma(&self, weight: &Tensor) -> f64 {
        bilinear(&self.u, weight.data(), &self.v)
    }
}

/// Training-time normalization: one power-iteration step refines the
/// estimate, then the weight is divided by it.
pub fn spectral_normalize(weight: &Tensor, state: &mut SpectralState) -> Tensor {
    state.power_step(weight);
    weight.scale(1.0 / state.sigma(weight))
}

/// Inference-time normalization with the estimate frozen.
pub fn spectral_normalize_frozen(weight: &Tensor, state: &SpectralState) -> Tensor {
    weight.scale(1.0 / state.sigma(weight))
}
