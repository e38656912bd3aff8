//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use cyclefree::disc::{lsgan_d_loss_tape, lsgan_g_loss_tape, DiscriminatorParams};
use cyclefree::invgen::{GeneratorConfig, GeneratorParams, MixInit, SpectralState};
use cyclefree::tensor::{NormMode, Shape, Tape, Tensor};
use cyclefree::Var;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator with random orthogonal mixes and randomized output layers, so
/// every coupling step does something.
pub fn random_gen(seed: u64, blocks: usize, width: usize, out_std: f64) -> GeneratorParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = GeneratorConfig { blocks, width, levels: 2, mix_init: MixInit::Orthogonal };
    let mut g = GeneratorParams::new(cfg, &mut rng);
    g.randomize_outputs(out_std, &mut rng);
    g
}

/// `log|det A|` by Gaussian elimination with partial pivoting.
pub fn log_abs_det(mut a: Vec<f64>, n: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs())).unwrap();
        if p != c {
            for k in 0..n {
                a.swap(c * n + k, p * n + k);
            }
        }
        let piv = a[c * n + c];
        acc += piv.abs().ln();
        for r in c + 1..n {
            let f = a[r * n + c] / piv;
            for k in c..n {
                a[r * n + k] -= f * a[c * n + k];
            }
        }
    }
    acc
}

/// `log|det dG/dx|` from a central-difference Jacobian.
pub fn jacobian_logdet(g: &GeneratorParams, x: &Tensor) -> f64 {
    let f = g.frozen::<f64>().unwrap();
    let n = x.numel();
    let h = 1e-6;
    let mut jac = vec![0.0; n * n];
    for j in 0..n {
        let mut p = x.clone();
        p.data_mut()[j] += h;
        let mut m = x.clone();
        m.data_mut()[j] -= h;
        let (a, b) = (f.forward_tensor(&p).unwrap(), f.forward_tensor(&m).unwrap());
        for i in 0..n {
            jac[i * n + j] = (a.data()[i] - b.data()[i]) / (2.0 * h);
        }
    }
    log_abs_det(jac, n)
}

/// Singular values of a row-major `m x n` matrix (`m >= n`), descending.
/// Columns are rotated pairwise until mutually orthogonal; their norms are
/// the values.
pub fn jacobi_singular_values(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[i * n + j]).collect()).collect();
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 { 1.0 } else { zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt()) };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
            }
        }
        if off < 1e-14 {
            break;
        }
    }
    let mut s: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Largest singular value of a weight viewed as `(out, in*kh*kw)`.
pub fn sigma_max(w: &Tensor) -> f64 {
    let rows = w.shape().batch;
    let cols = w.numel() / rows;
    if rows >= cols {
        jacobi_singular_values(w.data(), rows, cols)[0]
    } else {
        let t: Vec<f64> = (0..cols * rows).map(|k| w.data()[(k % rows) * cols + k / rows]).collect();
        jacobi_singular_values(&t, cols, rows)[0]
    }
}

/// Random weight whose top singular value is boosted by 50%, giving a clear
/// gap; the power estimate then converges within the warmup.
pub fn gapped_weight(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let w = Tensor::randn(Shape::new(rows, cols, 1, 1), 1.0, rng);
    let mut st = SpectralState::new(&w, 2000, rng);
    st.warmup(&w, 2000);
    let s1 = st.sigma(&w);
    let mut data = w.data().to_vec();
    for i in 0..rows {
        for j in 0..cols {
            data[i * cols + j] += 0.5 * s1 * st.u[i] * st.v[j];
        }
    }
    Tensor::from_vec(w.shape(), data).unwrap()
}

pub const ETA: f64 = 10.0;
pub const ADV: f64 = 2.0;

/// Scalar touching every parameter: the generator objective plus the
/// discriminator loss, in batch-norm training mode. Returns the value and,
/// when asked, gradients for generator and discriminator parameters.
pub fn objective(
    gen: &GeneratorParams,
    disc: &DiscriminatorParams,
    ld: &Tensor,
    sd: &Tensor,
    with_grads: bool,
) -> (f64, Vec<Tensor>, Vec<Tensor>) {
    let mut gen = gen.clone();
    let mut disc = disc.clone();
    let mut tape = Tape::new();
    let gv = gen.bind(&mut tape, false, true).unwrap();
    let dv = disc.bind(&mut tape, true);
    let x = tape.constant(ld.clone());
    let real = tape.constant(sd.clone());
    let fake = gen.forward_tape(&mut tape, &gv, x).unwrap();
    let fake_scores = disc.forward_tape(&mut tape, &dv, fake, NormMode::Train).unwrap();
    let real_scores = disc.forward_tape(&mut tape, &dv, real, NormMode::Train).unwrap();
    let g_adv = lsgan_g_loss_tape(&mut tape, fake_scores);
    let d_loss = lsgan_d_loss_tape(&mut tape, real_scores, fake_scores).unwrap();
    let diff = tape.sub(x, fake).unwrap();
    let diff = tape.abs(diff);
    let id = tape.mean(diff);
    let a = tape.scale(g_adv, ADV);
    let b = tape.scale(id, ETA);
    let g_total = tape.add(a, b).unwrap();
    let total = tape.add(g_total, d_loss).unwrap();
    let value = tape.value(total).item().unwrap();
    if !with_grads {
        return (value, vec![], vec![]);
    }
    tape.backward(total).unwrap();
    let grab = |vars: Vec<Var>, params: Vec<&Tensor>| -> Vec<Tensor> {
        vars.iter()
            .zip(params)
            .map(|(&v, p)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect()
    };
    let gg = grab(gv.leaves(), gen.params());
    let dg = grab(dv.leaves(), disc.params());
    (value, gg, dg)
}

/// Result of comparing sampled gradient entries with central differences.
pub struct GradCheck {
    pub checked: usize,
    pub nonzero: usize,
    pub worst_rel: f64,
    pub failures: Vec<String>,
}

/// Relative error with a small absolute floor for near-zero gradients.
pub fn rel_err(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / (fd.abs().max(an.abs()) + 1e-5)
}

/// Samples `per_tensor` entries of every parameter tensor and compares the
/// analytic gradient with a central difference of step `1e-6`.
pub fn check_objective_gradients(
    gen: &GeneratorParams,
    disc: &DiscriminatorParams,
    ld: &Tensor,
    sd: &Tensor,
    per_tensor: usize,
    tol: f64,
    seed: u64,
) -> GradCheck {
    let (_, ggrads, dgrads) = objective(gen, disc, ld, sd, true);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut out = GradCheck { checked: 0, nonzero: 0, worst_rel: 0.0, failures: Vec::new() };
    let record = |name: String, fd: f64, an: f64, out: &mut GradCheck| {
        let e = rel_err(fd, an);
        out.checked += 1;
        out.nonzero += (an.abs() > 1e-9) as usize;
        out.worst_rel = out.worst_rel.max(e);
        if e > tol {
            out.failures.push(format!("{name}: fd {fd:e} vs analytic {an:e}"));
        }
    };
    for p in 0..ggrads.len() {
        let len = ggrads[p].numel();
        for _ in 0..per_tensor {
            let i = rng.gen_range(0..len);
            let eval = |delta: f64| {
                let mut g = gen.clone();
                g.params_mut()[p].data_mut()[i] += delta;
                let _ = g.refresh();
                objective(&g, disc, ld, sd, false).0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            record(format!("generator param {p}[{i}]"), fd, ggrads[p].data()[i], &mut out);
        }
    }
    for p in 0..dgrads.len() {
        let len = dgrads[p].numel();
        for _ in 0..per_tensor {
            let i = rng.gen_range(0..len);
            let eval = |delta: f64| {
                let mut d = disc.clone();
                d.params_mut()[p].data_mut()[i] += delta;
                objective(gen, &d, ld, sd, false).0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            record(format!("discriminator param {p}[{i}]"), fd, dgrads[p].data()[i], &mut out);
        }
    }
    out
}
