//! Exact invertibility of the generator and the quantities derived from it.

mod common;

use common::{jacobian_logdet, random_gen};
use cyclefree::invgen::{GeneratorConfig, GeneratorParams, MixInit};
use cyclefree::tensor::{Shape, Tensor};
use cyclefree::train::{cycle_loss_probe, Denoiser, TrainConfig, Trainer};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn round_trip_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..10 {
        let g = random_gen(seed, 4, 8, 0.1);
        let x = Tensor::randn(Shape::new(1, 1, 32, 32), 0.3, &mut rng);
        let d64 = Denoiser::<f64>::new(&g).unwrap();
        let y = d64.forward(&x).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() > 1e-3, "draw {seed} is trivially the identity");
        assert!(d64.inverse(&y).unwrap().max_abs_diff(&x).unwrap() <= 1e-10);
        let d32 = Denoiser::<f32>::new(&g).unwrap();
        let back = d32.inverse(&d32.forward(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() <= 1e-4);
        let z = d64.forward(&d64.inverse(&x).unwrap()).unwrap();
        assert!(z.max_abs_diff(&x).unwrap() <= 1e-10);
    }
}

#[test]
fn cycle_loss_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..5 {
        let g = random_gen(seed + 100, 3, 8, 0.2);
        let x = Tensor::randn(Shape::new(2, 1, 16, 16), 1.0, &mut rng);
        let y = Tensor::randn(Shape::new(2, 1, 16, 16), 1.0, &mut rng);
        assert!(cycle_loss_probe::<f64>(&x, &y, &g).unwrap() <= 1e-8);
    }
}

#[test]
fn logdet_matches_jacobian_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..4 {
        let mut rng_w = ChaCha8Rng::seed_from_u64(seed);
        let cfg = GeneratorConfig { blocks: 3, width: 6, levels: 1, mix_init: MixInit::NearIdentity { noise: 0.5 } };
        let mut g = GeneratorParams::new(cfg, &mut rng_w);
        g.randomize_outputs(0.3, &mut rng_w);
        let x = Tensor::randn(Shape::new(1, 1, 4, 4), 0.5, &mut rng);
        let oracle = jacobian_logdet(&g, &x);
        let closed = g.log_det(4, 4).unwrap();
        let per_pixel: f64 = g.mix_determinants().iter().map(|d| d.ln()).sum();
        assert!((closed - 4.0 * per_pixel).abs() < 1e-12);
        assert!((oracle - closed).abs() <= 1e-6, "seed {seed}: oracle {oracle} vs {closed}");
        assert!(closed.abs() > 0.1, "mixes should change volume");
    }
}

#[test]
fn coupling_steps_preserve_volume() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = GeneratorConfig { blocks: 2, width: 6, levels: 1, mix_init: MixInit::NearIdentity { noise: 0.0 } };
    let mut g = GeneratorParams::new(cfg, &mut rng);
    g.randomize_outputs(0.5, &mut rng);
    let x = Tensor::randn(Shape::new(1, 1, 4, 4), 0.5, &mut rng);
    assert_eq!(g.log_det(4, 4).unwrap(), 0.0);
    let oracle = jacobian_logdet(&g, &x);
    assert!(oracle.abs() <= 1e-6, "{oracle}");
    let y = g.frozen::<f64>().unwrap().forward_tensor(&x).unwrap();
    assert!(y.max_abs_diff(&x).unwrap() > 1e-2);
}

#[test]
fn near_identity_at_initialization() {
    let t = Trainer::new(TrainConfig::desk()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let r = Tensor::randn(Shape::new(1, 1, 64, 64), 0.05, &mut rng);
    let g = t.gen.frozen::<f64>().unwrap().forward_tensor(&r).unwrap();
    let rel = g.sub(&r).unwrap().norm_l2() / r.norm_l2();
    assert!(rel <= 0.05, "{rel}");
}

#[test]
fn lipschitz_bound_dominates_sampled_ratios() {
    let g = random_gen(21, 2, 8, 0.3);
    let bound = g.lipschitz_bound();
    let f = g.frozen::<f64>().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = Tensor::randn(Shape::new(1, 1, 16, 16), 1.0, &mut rng);
        let b = a.add(&Tensor::randn(a.shape(), 0.01, &mut rng)).unwrap();
        let num = f.forward_tensor(&a).unwrap().sub(&f.forward_tensor(&b).unwrap()).unwrap().norm_l2();
        worst = worst.max(num / a.sub(&b).unwrap().norm_l2());
    }
    assert!(worst > 0.0 && worst <= bound, "ratio {worst} vs bound {bound}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_any_shape(seed in 0u64..1000, half_h in 1usize..10, half_w in 1usize..10, batch in 1usize..3, scale in 0.01f64..10.0) {
        let g = random_gen(seed, 2, 4, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let x = Tensor::randn(Shape::new(batch, 1, 2 * half_h, 2 * half_w), scale, &mut rng);
        let d = Denoiser::<f64>::new(&g).unwrap();
        let back = d.inverse(&d.forward(&x).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&x).unwrap() <= 1e-10 * scale.max(1.0));
    }

    #[test]
    fn odd_sizes_rejected(h in 1usize..12, w in 1usize..12) {
        prop_assume!(h % 2 == 1 || w % 2 == 1);
        let g = random_gen(1, 1, 2, 0.1);
        let x = Tensor::zeros(Shape::new(1, 1, h, w));
        prop_assert!(g.frozen::<f64>().unwrap().forward_tensor(&x).is_err());
    }
}
