use crate::error::Result;
use crate::invgen::{FrozenGenerator, GeneratorParams};
use crate::tensor::{Real, Tensor};
use crate::wavelet::wavelet_residual;

/// Sweep cap of the fixed-point solve in [`Denoiser::synthesize_noise`].
pub const SYNTH_MAX_SWEEPS: usize = 30;

fn mean_abs_diff(a: &Tensor, b: &Tensor) -> Result<f64> {
    Ok(a.sub(b)?.map(f64::abs).mean())
}

/// `mean |r - G(r)|` over a batch of low-dose residuals.
pub fn identity_loss(r: &Tensor, gen: &GeneratorParams) -> Result<f64> {
    let g = gen.frozen::<f64>()?.forward_tensor(r)?;
    mean_abs_diff(r, &g)
}

/// Frozen generator plus the wavelet level it was trained at, in
/// precision `T`. Wavelet transforms always run in 64-bit.
pub struct Denoiser<T> {
    pub generator: FrozenGenerator<T>,
    pub levels: usize,
}

impl<T: Real> Denoiser<T> {
    pub fn new(gen: &GeneratorParams) -> Result<Self> {
        Ok(Denoiser {
            generator: gen.frozen::<T>()?,
            levels: gen.config.levels,
        })
    }

    fn apply(&self, r: &Tensor, inverse: bool) -> Result<Tensor> {
        let x: Vec<T> = r.data().iter().map(|&v| T::from_f64(v)).collect();
        let y = if inverse {
            self.generator.inverse(&x, r.shape())?
        } else {
            self.generator.forward(&x, r.shape())?
        };
        Tensor::from_vec(r.shape(), y.into_iter().map(|v| Real::to_f64(v)).collect())
    }

    /// `G(r)`.
    pub fn forward(&self, r: &Tensor) -> Result<Tensor> {
        self.apply(r, false)
    }

    /// `G^{-1}(r)`.
    pub fn inverse(&self, r: &Tensor) -> Result<Tensor> {
        self.apply(r, true)
    }

    /// Estimated noise pattern of a low-dose image: the residual-domain
    /// change `r - G(r)`, projected back onto the residual subspace so the
    /// wavelet lowband is never touched.
    pub fn noise_pattern(&self, y_ld: &Tensor) -> Result<Tensor> {
        let (r, _) = wavelet_residual(y_ld, self.levels)?;
        let mapped = self.apply(&r, false)?;
        Ok(wavelet_residual(&r.sub(&mapped)?, self.levels)?.0)
    }

    /// `y - noise_pattern(y)`.
    pub fn denoise(&self, y_ld: &Tensor) -> Result<Tensor> {
        y_ld.sub(&self.noise_pattern(y_ld)?)
    }

    /// Low-dose-like image from a standard-dose one, through `G^{-1}`.
    ///
    /// `denoise` keeps the lowband and sends a residual `v` to the residual
    /// part of `G(v)`. This is its exact inverse: it finds the lowband `l`
    /// for which `v = G^{-1}(t + l)` has no lowband, where `t` is the
    /// residual of `x_sd`. Then `G(v) = t + l` and denoising returns `x_sd`.
    /// Because `G` is close to the identity on the lowband, the update
    /// `l -= lowband(v)` is a near-Newton step. The best iterate is kept.
    /// For a generator far from the identity on the lowband the sweep does
    /// not converge, and the result stays close to the first iterate
    /// `lowband(x) + residual(G^{-1}(t))`.
    pub fn synthesize_noise(&self, x_sd: &Tensor) -> Result<Tensor> {
        let (t, keep) = wavelet_residual(x_sd, self.levels)?;
        let tol = 64.0 * Real::to_f64(T::epsilon()) * (1.0 + t.max_abs());
        let mut l = Tensor::zeros(t.shape());
        let mut best: Option<(f64, Tensor)> = None;
        let mut stalled = 0;
        for _ in 0..SYNTH_MAX_SWEEPS {
            let v = self.apply(&t.add(&l)?, true)?;
            let (v_res, v_low) = wavelet_residual(&v, self.levels)?;
            let err = v_low.max_abs();
            if best.as_ref().map_or(true, |(e, _)| err < *e) {
                best = Some((err, v_res));
                stalled = 0;
            } else {
                stalled += 1;
            }
            // far from the identity on the lowband the sweep diverges; the
            // first iterate, the projected G^{-1}(t), is then the answer
            if err <= tol || !err.is_finite() || stalled == 3 {
                break;
            }
            l = l.sub(&v_low)?;
        }
        let (_, v) = best.expect("at least one sweep");
        keep.add(&v)
    }
}

pub fn denoise(y_ld: &Tensor, gen: &GeneratorParams) -> Result<Tensor> {
    Denoiser::<f64>::new(gen)?.denoise(y_ld)
}

pub fn synthesize_noise(x_sd: &Tensor, gen: &GeneratorParams) -> Result<Tensor> {
    Denoiser::<f64>::new(gen)?.synthesize_noise(x_sd)
}

/// Cycle-consistency loss with `F = G^{-1}`:
/// `mean|x - G(G^{-1}(x))| + mean|y - G^{-1}(G(y))|`.
pub fn cycle_loss_probe<T: Real>(x: &Tensor, y: &Tensor, gen: &GeneratorParams) -> Result<f64> {
    let d = Denoiser::<T>::new(gen)?;
    let x_cycle = d.forward(&d.inverse(x)?)?;
    let y_cycle = d.inverse(&d.forward(y)?)?;
    Ok(mean_abs_diff(x, &x_cycle)? + mean_abs_diff(y, &y_cycle)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invgen::{GeneratorConfig, MixInit};
    use crate::tensor::Shape;
    use crate::wavelet::wavelet_lowband;
    use rand::SeedableRng;

    fn cfg() -> GeneratorConfig {
        GeneratorConfig { blocks: 2, width: 4, levels: 2, mix_init: MixInit::Orthogonal }
    }

    #[test]
    fn identity_generator_leaves_images_alone() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let g = GeneratorParams::identity(cfg(), &mut rng);
        let y = Tensor::randn(Shape::new(1, 1, 16, 16), 0.1, &mut rng);
        assert_eq!(identity_loss(&y, &g).unwrap(), 0.0);
        assert!(denoise(&y, &g).unwrap().max_abs_diff(&y).unwrap() < 1e-15);
        assert!(synthesize_noise(&y, &g).unwrap().max_abs_diff(&y).unwrap() < 1e-15);
        assert_eq!(cycle_loss_probe::<f64>(&y, &y, &g).unwrap(), 0.0);
    }

    #[test]
    fn lowband_untouched_and_cycle_vanishes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut g = GeneratorParams::new(cfg(), &mut rng);
        g.randomize_outputs(0.2, &mut rng);
        let y = Tensor::randn(Shape::new(1, 1, 16, 16), 0.1, &mut rng);
        let out = denoise(&y, &g).unwrap();
        let diff = wavelet_lowband(&out, 2).unwrap().max_abs_diff(&wavelet_lowband(&y, 2).unwrap()).unwrap();
        assert!(diff < 1e-10, "{diff}");
        assert!(out.max_abs_diff(&y).unwrap() > 1e-3);
        let x = Tensor::randn(Shape::new(1, 1, 16, 16), 0.1, &mut rng);
        assert!(cycle_loss_probe::<f64>(&x, &y, &g).unwrap() <= 1e-8);
    }

    #[test]
    fn synthesis_inverts_denoising_and_keeps_lowband() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let near = GeneratorConfig { mix_init: MixInit::NearIdentity { noise: 0.05 }, ..cfg() };
        let mut g = GeneratorParams::new(near, &mut rng);
        g.randomize_outputs(0.1, &mut rng);
        let d = Denoiser::<f64>::new(&g).unwrap();
        let x = Tensor::randn(Shape::new(2, 1, 32, 32), 0.1, &mut rng);
        let s = d.synthesize_noise(&x).unwrap();
        assert!(s.max_abs_diff(&x).unwrap() > 1e-3);
        let lo = wavelet_lowband(&s, 2).unwrap().max_abs_diff(&wavelet_lowband(&x, 2).unwrap()).unwrap();
        assert!(lo < 1e-10, "{lo}");
        assert!(d.denoise(&s).unwrap().max_abs_diff(&x).unwrap() < 1e-12);
        let y = d.synthesize_noise(&d.denoise(&x).unwrap()).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() < 1e-12);
        let d32 = Denoiser::<f32>::new(&g).unwrap();
        let back = d32.denoise(&d32.synthesize_noise(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() < 1e-5);
    }

    #[test]
    fn synthesis_falls_back_to_projected_inverse() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut g = GeneratorParams::new(cfg(), &mut rng);
        g.randomize_outputs(0.05, &mut rng);
        let d = Denoiser::<f64>::new(&g).unwrap();
        let x = Tensor::randn(Shape::new(1, 1, 32, 32), 0.1, &mut rng);
        let s = d.synthesize_noise(&x).unwrap();
        let (t, keep) = wavelet_residual(&x, 2).unwrap();
        let first = keep.add(&wavelet_residual(&d.inverse(&t).unwrap(), 2).unwrap().0).unwrap();
        assert!(s.max_abs_diff(&first).unwrap() < 1e-12);
        let lo = wavelet_lowband(&s, 2).unwrap().max_abs_diff(&keep).unwrap();
        assert!(lo < 1e-10, "{lo}");
    }
}
