//! PSNR and SSIM image-quality metrics.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Dynamic range used in normalized units.
pub const MAX_NORMALIZED: f64 = 2.0;
/// Dynamic range used in HU (the width of the (-1000, 1000) display window).
pub const MAX_HU: f64 = 2000.0;

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// Value range of a metric computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Normalized,
    Hu,
}

impl Units {
    /// Multiplier from normalized values into these units.
    pub fn scale(self) -> f64 {
        match self {
            Units::Normalized => 1.0,
            Units::Hu => crate::ctsim::HU_SCALE,
        }
    }

    pub fn dynamic_range(self) -> f64 {
        match self {
            Units::Normalized => MAX_NORMALIZED,
            Units::Hu => MAX_HU,
        }
    }
}

fn check(op: &'static str, x: &Tensor, y: &Tensor) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::shape(op, format!("{} vs {}", x.shape(), y.shape())));
    }
    if x.numel() == 0 {
        return Err(Error::InvalidArgument(format!("{op} of an empty image")));
    }
    Ok(())
}

/// `20 log10(max / RMSE)`; `+inf` for identical images.
pub fn psnr_with(x: &Tensor, y: &Tensor, max: f64) -> Result<f64> {
    check("psnr", x, y)?;
    let mse = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.numel() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (max / mse.sqrt()).log10())
}

/// PSNR in normalized units.
pub fn psnr(x: &Tensor, reference: &Tensor) -> Result<f64> {
    psnr_with(x, reference, MAX_NORMALIZED)
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn ssim_term(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64, c1: f64, c2: f64) -> f64 {
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Mean SSIM over every position where the 11x11 Gaussian window fits
/// inside the image, averaged over all planes.
pub fn ssim_with(x: &Tensor, y: &Tensor, dynamic_range: f64) -> Result<f64> {
    check("ssim", x, y)?;
    let s = x.shape();
    let n = SSIM_WINDOW;
    if s.height < n || s.width < n {
        return Err(Error::InvalidArgument(format!(
            "windowed SSIM needs images of at least {n}x{n}, got {}x{}",
            s.height, s.width
        )));
    }
    let g = gaussian_window(n, SSIM_SIGMA);
    let c1 = (SSIM_K1 * dynamic_range).powi(2);
    let c2 = (SSIM_K2 * dynamic_range).powi(2);
    let (h, w) = (s.height, s.width);
    let mut total = 0.0;
    let mut count = 0usize;
    for p in 0..s.batch * s.channels {
        let xs = &x.data()[p * h * w..(p + 1) * h * w];
        let ys = &y.data()[p * h * w..(p + 1) * h * w];
        for r in 0..=h - n {
            for c in 0..=w - n {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let wt = g[i] * g[j];
                        let a = xs[(r + i) * w + c + j];
                        let b = ys[(r + i) * w + c + j];
                        mx += wt * a;
                        my += wt * b;
                        sxx += wt * a * a;
                        syy += wt * b * b;
                        sxy += wt * a * b;
                    }
                }
                total += ssim_term(mx, my, sxx - mx * mx, syy - my * my, sxy - mx * my, c1, c2);
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Windowed SSIM in normalized units.
pub fn ssim(x: &Tensor, reference: &Tensor) -> Result<f64> {
    ssim_with(x, reference, MAX_NORMALIZED)
}

/// SSIM from whole-image statistics (one window covering everything).
pub fn ssim_global_with(x: &Tensor, y: &Tensor, dynamic_range: f64) -> Result<f64> {
    check("ssim", x, y)?;
    let n = x.numel() as f64;
    let (mx, my) = (x.mean(), y.mean());
    let cxy = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / n;
    let c1 = (SSIM_K1 * dynamic_range).powi(2);
    let c2 = (SSIM_K2 * dynamic_range).powi(2);
    Ok(ssim_term(mx, my, x.variance(), y.variance(), cxy, c1, c2))
}

pub fn ssim_global(x: &Tensor, reference: &Tensor) -> Result<f64> {
    ssim_global_with(x, reference, MAX_NORMALIZED)
}

/// Which SSIM variant a report uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SsimMode {
    #[default]
    Windowed,
    Global,
}

/// PSNR and SSIM of `x` against `reference` in the given units.
pub fn score(x: &Tensor, reference: &Tensor, units: Units, mode: SsimMode) -> Result<(f64, f64)> {
    let k = units.scale();
    let (xs, rs) = if k == 1.0 {
        (x.clone(), reference.clone())
    } else {
        (x.scale(k), reference.scale(k))
    };
    let l = units.dynamic_range();
    let p = psnr_with(&xs, &rs, l)?;
    let s = match mode {
        SsimMode::Windowed => ssim_with(&xs, &rs, l)?,
        SsimMode::Global => ssim_global_with(&xs, &rs, l)?,
    };
    Ok((p, s))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

/// Per-image scores with summary statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub ids: Vec<String>,
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

impl MetricReport {
    pub fn push(&mut self, id: impl Into<String>, psnr: f64, ssim: f64) {
        self.ids.push(id.into());
        self.psnr.push(psnr);
        self.ssim.push(ssim);
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn psnr_mean_std(&self) -> (f64, f64) {
        mean_std(&self.psnr)
    }

    pub fn ssim_mean_std(&self) -> (f64, f64) {
        mean_std(&self.ssim)
    }

    /// `image_id,psnr_db,ssim` rows, then `mean` and `std` summary rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image_id,psnr_db,ssim\n");
        for i in 0..self.count() {
            let _ = writeln!(s, "{},{},{}", self.ids[i], self.psnr[i], self.ssim[i]);
        }
        let (pm, ps) = self.psnr_mean_std();
        let (sm, ss) = self.ssim_mean_std();
        let _ = writeln!(s, "mean,{pm},{sm}");
        let _ = writeln!(s, "std,{ps},{ss}");
        s
    }
}
