use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ray-marching step along each line integral, in pixels.
pub const RAY_STEP: f64 = 0.5;

/// Noise settings a sinogram was generated with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dose {
    pub i0: f64,
    pub alpha: f64,
    pub seed: u64,
}

/// Parallel-beam line integrals `p(theta, t)`, stored angle-major.
/// Angles are `k * pi / n_angles`; detector bins have unit (pixel) spacing
/// and are centered on the rotation axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SinogramSet {
    pub n_angles: usize,
    pub n_det: usize,
    pub data: Vec<f64>,
    /// `None` for noiseless projections.
    pub dose: Option<Dose>,
}

impl SinogramSet {
    pub fn zeros(n_angles: usize, n_det: usize) -> Self {
        SinogramSet {
            n_angles,
            n_det,
            data: vec![0.0; n_angles * n_det],
            dose: None,
        }
    }

    pub fn angle(&self, k: usize) -> f64 {
        k as f64 * PI / self.n_angles as f64
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_det..(k + 1) * self.n_det]
    }

    /// `a * self + b * other`, keeping this set's metadata.
    pub fn combine(&self, a: f64, other: &SinogramSet, b: f64) -> Result<SinogramSet> {
        if (self.n_angles, self.n_det) != (other.n_angles, other.n_det) {
            return Err(Error::shape("sinogram", "geometry mismatch"));
        }
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Ok(SinogramSet { data, ..self.clone() })
    }
}

/// Detector count covering the image diagonal.
pub fn default_detector_count(grid: usize) -> usize {
    (std::f64::consts::SQRT_2 * grid as f64).ceil() as usize
}

fn detector_center(n_det: usize) -> f64 {
    (n_det as f64 - 1.0) / 2.0
}

fn square_plane(image: &Tensor) -> Result<usize> {
    let s = image.shape();
    if s.batch != 1 || s.channels != 1 || s.height != s.width {
        return Err(Error::shape("radon", format!("expected a square (1,1,n,n) image, got {s}")));
    }
    Ok(s.height)
}

/// Bilinear sample with zero outside; `(x, y)` relative to the image center.
fn sample(img: &[f64], g: usize, x: f64, y: f64) -> f64 {
    let half = g as f64 / 2.0;
    let fx = x + half - 0.5;
    let fy = y + half - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let (tx, ty) = (fx - x0, fy - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let at = |r: isize, c: isize| {
        if r < 0 || c < 0 || r >= g as isize || c >= g as isize {
            0.0
        } else {
            img[r as usize * g + c as usize]
        }
    };
    (1.0 - ty) * ((1.0 - tx) * at(y0, x0) + tx * at(y0, x0 + 1))
        + ty * ((1.0 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1))
}

/// Line integrals of a square image, in pixel units.
pub fn radon(image: &Tensor, n_angles: usize, n_det: usize) -> Result<SinogramSet> {
    let g = square_plane(image)?;
    if n_angles == 0 || n_det == 0 {
        return Err(Error::InvalidArgument("radon needs at least one angle and one bin".into()));
    }
    let img = image.data();
    let mut sino = SinogramSet::zeros(n_angles, n_det);
    let reach = (g as f64) * std::f64::consts::FRAC_1_SQRT_2 + 1.0;
    let steps = (2.0 * reach / RAY_STEP).ceil() as usize;
    let center = detector_center(n_det);
    for k in 0..n_angles {
        let (sin, cos) = sino.angle(k).sin_cos();
        for d in 0..n_det {
            let t = d as f64 - center;
            let mut acc = 0.0;
            for i in 0..=steps {
                let s = -reach + i as f64 * RAY_STEP;
                acc += sample(img, g, t * cos - s * sin, t * sin + s * cos);
            }
            sino.data[k * n_det + d] = acc * RAY_STEP;
        }
    }
    Ok(sino)
}

/// Ram-Lak filter for unit detector spacing, applied by FFT on rows
/// zero-padded to avoid circular wrap-around.
struct RampFilter {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    response: Vec<f64>,
}

impl RampFilter {
    fn new(n_det: usize) -> Self {
        let n = (2 * n_det).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        // band-limited spatial kernel: 1/4 at 0, -1/(pi k)^2 at odd k
        let mut kernel: Vec<Complex64> = (0..n)
            .map(|i| {
                let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                let v = if i == 0 {
                    0.25
                } else if (k as i64) % 2 != 0 {
                    -1.0 / (PI * k).powi(2)
                } else {
                    0.0
                };
                Complex64::new(v, 0.0)
            })
            .collect();
        fft.process(&mut kernel);
        let response = kernel.iter().map(|c| c.re).collect();
        RampFilter { n, fft, ifft, response }
    }

    fn apply(&self, row: &[f64], out: &mut [f64]) {
        let mut buf: Vec<Complex64> = (0..self.n)
            .map(|i| Complex64::new(row.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.fft.process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&self.response) {
            *b *= h;
        }
        self.ifft.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
    }
}

/// Filtered backprojection onto a `grid x grid` image.
pub fn fbp(sino: &SinogramSet, grid: usize) -> Result<Tensor> {
    if sino.data.len() != sino.n_angles * sino.n_det {
        return Err(Error::shape("fbp", "sinogram buffer does not match its geometry"));
    }
    let filter = RampFilter::new(sino.n_det);
    let mut filtered = vec![0.0; sino.data.len()];
    for k in 0..sino.n_angles {
        filter.apply(sino.row(k), &mut filtered[k * sino.n_det..(k + 1) * sino.n_det]);
    }
    let center = detector_center(sino.n_det);
    let half = grid as f64 / 2.0;
    let last = sino.n_det as f64 - 1.0;
    let mut img = vec![0.0; grid * grid];
    for k in 0..sino.n_angles {
        let (sin, cos) = sino.angle(k).sin_cos();
        let q = &filtered[k * sino.n_det..(k + 1) * sino.n_det];
        for r in 0..grid {
            let y = r as f64 + 0.5 - half;
            for c in 0..grid {
                let x = c as f64 + 0.5 - half;
                let u = x * cos + y * sin + center;
                if u < 0.0 || u > last {
                    continue;
                }
                let i = (u.floor() as usize).min(sino.n_det.saturating_sub(2));
                let f = u - i as f64;
                let next = q.get(i + 1).copied().unwrap_or(0.0);
                img[r * grid + c] += (1.0 - f) * q[i] + f * next;
            }
        }
    }
    let scale = PI / sino.n_angles as f64;
    img.iter_mut().for_each(|v| *v *= scale);
    Tensor::image(grid, grid, img)
}
