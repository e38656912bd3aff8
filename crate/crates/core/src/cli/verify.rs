use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::invgen::{GeneratorParams, MIN_ABS_DET};
use crate::linalg::{determinant, top_singular_value};
use crate::tensor::{Shape, Tensor};
use crate::train::{cycle_loss_probe, Denoiser};
use crate::wavelet::{dwt2, idwt2};

pub const ROUND_TRIP_TOL_F64: f64 = 1e-10;
pub const ROUND_TRIP_TOL_F32: f64 = 1e-4;
pub const CYCLE_TOL: f64 = 1e-8;
pub const LOGDET_TOL: f64 = 1e-6;
pub const WAVELET_TOL: f64 = 1e-10;
/// Accepted range of `sigma_hat / sigma_max` for spectral-norm estimates.
pub const SN_RANGE: (f64, f64) = (0.95, 1.05);

/// Outcome of one invariant check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantity (`NaN` if it could not be computed).
    pub value: f64,
    pub detail: String,
}

impl Check {
    fn bound(name: &'static str, value: f64, tol: f64, what: &str) -> Check {
        Check {
            name,
            passed: value <= tol,
            value,
            detail: format!("{what} = {value:.3e} (tol {tol:.0e})"),
        }
    }

    fn failed(name: &'static str, detail: String) -> Check {
        Check { name, passed: false, value: f64::NAN, detail }
    }
}

/// Checks for one generator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub subject: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn or_fail(name: &'static str, r: Result<Check>) -> Check {
    r.unwrap_or_else(|e| Check::failed(name, e.to_string()))
}

/// Dense Jacobian of the generator at `x` by central differences, then
/// `log|det J|`. The generator is piecewise linear, so the differences are
/// exact up to rounding away from activation kinks.
pub fn logdet_oracle(gen: &GeneratorParams, x: &Tensor) -> Result<f64> {
    let f = gen.frozen::<f64>()?;
    let n = x.numel();
    let h = 1e-6;
    let mut jac = vec![0.0; n * n];
    for j in 0..n {
        let mut plus = x.clone();
        plus.data_mut()[j] += h;
        let mut minus = x.clone();
        minus.data_mut()[j] -= h;
        let (a, b) = (f.forward_tensor(&plus)?, f.forward_tensor(&minus)?);
        for i in 0..n {
            jac[i * n + j] = (a.data()[i] - b.data()[i]) / (2.0 * h);
        }
    }
    Ok(determinant(&jac, n).abs().ln())
}

/// Runs the invariant battery on `gen` with inputs drawn from `rng`.
/// `size` is the side of the square test image.
pub fn verify_generator<R: Rng + ?Sized>(
    subject: impl Into<String>,
    gen: &GeneratorParams,
    size: usize,
    rng: &mut R,
) -> VerifyReport {
    let shape = Shape::new(1, 1, size, size);
    let x = Tensor::randn(shape, 0.1, rng);
    let y = Tensor::randn(shape, 0.1, rng);
    let mut checks = Vec::new();

    let dets = gen.mix_determinants();
    let worst = dets.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min);
    let list = dets.iter().map(|d| format!("{d:.6e}")).collect::<Vec<_>>().join(", ");
    checks.push(Check {
        name: "determinant",
        passed: dets.iter().all(|d| d.is_finite() && d.abs() >= MIN_ABS_DET),
        value: worst,
        detail: format!("det W_i = [{list}]; min |det| {worst:.3e} (need >= {MIN_ABS_DET:.0e})"),
    });

    checks.push(or_fail("round_trip_f64", (|| {
        let d = Denoiser::<f64>::new(gen)?;
        let err = d.inverse(&d.forward(&x)?)?.max_abs_diff(&x)?;
        Ok(Check::bound("round_trip_f64", err, ROUND_TRIP_TOL_F64, "max|G^-1(G(r)) - r|"))
    })()));
    checks.push(or_fail("round_trip_f32", (|| {
        let d = Denoiser::<f32>::new(gen)?;
        let err = d.inverse(&d.forward(&x)?)?.max_abs_diff(&x)?;
        Ok(Check::bound("round_trip_f32", err, ROUND_TRIP_TOL_F32, "max|G^-1(G(r)) - r|"))
    })()));
    checks.push(or_fail("cycle_loss", (|| {
        let c = cycle_loss_probe::<f64>(&x, &y, gen)?;
        Ok(Check::bound("cycle_loss", c, CYCLE_TOL, "cycle loss with F = G^-1"))
    })()));
    checks.push(or_fail("logdet", (|| {
        let toy = Tensor::randn(Shape::new(1, 1, 4, 4), 0.1, rng);
        let oracle = logdet_oracle(gen, &toy)?;
        let closed = gen.log_det(4, 4)?;
        let err = (oracle - closed).abs();
        let mut c = Check::bound("logdet", err, LOGDET_TOL, "|logdet - Jacobian oracle|");
        c.detail = format!("{} ({closed:.9} vs {oracle:.9})", c.detail);
        Ok(c)
    })()));

    let mut worst_sn = (1.0f64, String::new());
    for (b, block) in gen.blocks.iter().enumerate() {
        for (i, net) in block.nets.iter().enumerate() {
            for (layer, w, st) in [
                ("input", &net.input.weight, &net.sn_input),
                ("hidden", &net.hidden.weight, &net.sn_hidden),
            ] {
                let rows = w.shape().batch;
                let exact = top_singular_value(w.data(), rows, w.numel() / rows, 500);
                let ratio = st.sigma(w) / exact;
                if (ratio - 1.0).abs() > (worst_sn.0 - 1.0).abs() || worst_sn.1.is_empty() {
                    worst_sn = (ratio, format!("block {b} net {i} {layer}"));
                }
            }
        }
    }
    checks.push(Check {
        name: "spectral_norm",
        passed: worst_sn.0 >= SN_RANGE.0 && worst_sn.0 <= SN_RANGE.1,
        value: worst_sn.0,
        detail: format!(
            "worst sigma_hat / sigma_max = {:.6} at {} (range [{}, {}])",
            worst_sn.0, worst_sn.1, SN_RANGE.0, SN_RANGE.1
        ),
    });

    checks.push(or_fail("wavelet", (|| {
        let levels = gen.config.levels;
        let err = idwt2(&dwt2(&x, levels)?)?.max_abs_diff(&x)?;
        Ok(Check::bound("wavelet", err, WAVELET_TOL, "max|idwt(dwt(x)) - x|"))
    })()));

    VerifyReport {
        subject: subject.into(),
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

impl VerifyReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("{}: {}\n", self.subject, if self.passed { "PASS" } else { "FAIL" });
        for c in &self.checks {
            s += &format!("  {} {:<15} {}\n", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
        }
        s
    }
}
