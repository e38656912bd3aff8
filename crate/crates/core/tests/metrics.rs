//! PSNR and SSIM against direct formula evaluations.

use cyclefree::metrics::*;
use cyclefree::tensor::{Shape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Windowed SSIM written out with an explicit 2-D Gaussian kernel.
fn ssim_oracle(x: &Tensor, y: &Tensor, l: f64) -> f64 {
    let (h, w) = (x.shape().height, x.shape().width);
    let n = 11;
    let mut k = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            k[i * n + j] = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += k[i * n + j];
        }
    }
    k.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = ((0.01 * l).powi(2), (0.03 * l).powi(2));
    let mut acc = 0.0;
    let mut count = 0.0;
    for r in 0..=h - n {
        for c in 0..=w - n {
            let pix = |t: &Tensor, i: usize, j: usize| t.at(0, 0, r + i, c + j);
            let mut mx = 0.0;
            let mut my = 0.0;
            for i in 0..n {
                for j in 0..n {
                    mx += k[i * n + j] * pix(x, i, j);
                    my += k[i * n + j] * pix(y, i, j);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let (a, b) = (pix(x, i, j) - mx, pix(y, i, j) - my);
                    vx += k[i * n + j] * a * a;
                    vy += k[i * n + j] * b * b;
                    cxy += k[i * n + j] * a * b;
                }
            }
            acc += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1.0;
        }
    }
    acc / count
}

#[test]
fn psnr_closed_forms() {
    let x = Tensor::full(Shape::new(1, 1, 8, 8), 0.1);
    for c in [1e-3, 0.02, 0.5] {
        let y = x.map(|v| v + c);
        let expect = 20.0 * (2.0 / c).log10();
        assert!((psnr(&y, &x).unwrap() - expect).abs() < 1e-9);
    }
    assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
}

#[test]
fn ssim_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (h, w) in [(11, 11), (16, 20), (32, 32)] {
        let x = Tensor::randn(Shape::new(1, 1, h, w), 0.3, &mut rng);
        let y = x.add(&Tensor::randn(x.shape(), 0.1, &mut rng)).unwrap();
        let got = ssim(&y, &x).unwrap();
        assert!((got - ssim_oracle(&y, &x, 2.0)).abs() < 1e-12);
    }
}

#[test]
fn global_ssim_of_affine_copy() {
    // y = a x + b: mean my = a mx + b, var vy = a^2 vx, cov = a vx
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::randn(Shape::new(1, 1, 16, 16), 0.2, &mut rng);
    let (a, b) = (0.7, 0.05);
    let y = x.map(|v| a * v + b);
    let (mx, vx) = (x.mean(), x.variance());
    let my = a * mx + b;
    let (c1, c2) = (0.02f64.powi(2), 0.06f64.powi(2));
    let expect = (2.0 * mx * my + c1) * (2.0 * a * vx + c2) / ((mx * mx + my * my + c1) * (vx + a * a * vx + c2));
    assert!((ssim_global(&y, &x).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn hu_units_shift_psnr_by_a_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::randn(Shape::new(1, 1, 16, 16), 0.1, &mut rng);
    let y = x.add(&Tensor::randn(x.shape(), 0.01, &mut rng)).unwrap();
    let (pn, sn) = score(&y, &x, Units::Normalized, SsimMode::Windowed).unwrap();
    let (ph, sh) = score(&y, &x, Units::Hu, SsimMode::Windowed).unwrap();
    assert!((pn - ph - 20.0 * 4f64.log10()).abs() < 1e-9);
    // SSIM constants scale with the range, but the ranges differ by the same 2:1
    assert!(sn.is_finite() && sh.is_finite());
}

#[test]
fn self_comparison_sentinels() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut r = MetricReport::default();
    for i in 0..5 {
        let x = Tensor::randn(Shape::new(1, 1, 16, 16), 0.2, &mut rng);
        r.push(format!("{i}"), psnr(&x, &x).unwrap(), ssim(&x, &x).unwrap());
    }
    assert!(r.psnr.iter().all(|p| *p == f64::INFINITY));
    assert!(r.ssim.iter().all(|s| (s - 1.0).abs() < 1e-15));
    assert!(r.to_csv().contains("mean,inf,1"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ssim_is_symmetric_and_bounded(seed in 0u64..10_000, noise in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::randn(Shape::new(1, 1, 12, 14), 0.3, &mut rng);
        let y = x.add(&Tensor::randn(x.shape(), noise, &mut rng)).unwrap();
        let a = ssim(&x, &y).unwrap();
        prop_assert!((a - ssim(&y, &x).unwrap()).abs() < 1e-14);
        prop_assert!(a <= 1.0 + 1e-12 && a >= -1.0 - 1e-12);
    }

    #[test]
    fn psnr_decreases_with_noise(seed in 0u64..10_000, s in 0.001f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::randn(Shape::new(1, 1, 8, 8), 0.3, &mut rng);
        let e = Tensor::randn(x.shape(), 1.0, &mut rng);
        let small = x.add(&e.scale(s)).unwrap();
        let large = x.add(&e.scale(2.0 * s)).unwrap();
        let (a, b) = (psnr(&small, &x).unwrap(), psnr(&large, &x).unwrap());
        prop_assert!((a - b - 20.0 * 2f64.log10()).abs() < 1e-9);
    }
}
