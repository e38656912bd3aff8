//! Separable 2-D Daubechies-3 wavelet transform with periodic boundaries,
//! and the wavelet residual obtained by nulling the coarsest LL band.
//!
//! The residual isolates the high-frequency content of an image; it is what
//! the generator and discriminator operate on. The lowband (`image -
//! residual`) passes through denoising untouched.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Daubechies-3 scaling (lowpass synthesis) filter, 6 taps, orthonormal
/// (taps sum to sqrt(2)). Evaluated from the closed form
/// `(1/(16 sqrt 2)) [1+r+s, 5+r+3s, 10-2r+2s, 10-2r-2s, 5+r-3s, 1+r-s]`
/// with `r = sqrt(10)`, `s = sqrt(5 + 2r)` in 40-digit arithmetic. The usual
/// printed tables are rounded badly enough to break orthonormality at 1e-12.
pub const DB3_LOWPASS: [f64; 6] = [
    0.332_670_552_950_082_63,
    0.806_891_509_311_092_5,
    0.459_877_502_118_491_54,
    -0.135_011_020_010_254_58,
    -0.085_441_273_882_026_66,
    0.035_226_291_885_709_53,
];

/// Quadrature-mirror highpass partner: `g[j] = (-1)^j h[5-j]`.
pub fn db3_highpass() -> [f64; 6] {
    let h = DB3_LOWPASS;
    let mut g = [0.0; 6];
    for (j, gj) in g.iter_mut().enumerate() {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        *gj = sign * h[5 - j];
    }
    g
}

/// Boundary extension used by the transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
}

/// Detail subbands of one decomposition level.
///
/// `lh` is lowpass along rows and highpass along columns, `hl` the
/// opposite, `hh` highpass in both directions.
#[derive(Clone, Debug, PartialEq)]
pub struct DetailBands {
    pub height: usize,
    pub width: usize,
    pub lh: Vec<f64>,
    pub hl: Vec<f64>,
    pub hh: Vec<f64>,
}

/// Multilevel decomposition of one image plane.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletPyramid {
    pub height: usize,
    pub width: usize,
    pub boundary: Boundary,
    /// Finest level first.
    pub details: Vec<DetailBands>,
    /// Coarsest approximation band `LL_J`, `(height >> J) x (width >> J)`.
    pub lowband: Vec<f64>,
}

impl WaveletPyramid {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn lowband_dims(&self) -> (usize, usize) {
        (self.height >> self.levels(), self.width >> self.levels())
    }

    /// Total number of stored coefficients.
    pub fn coefficient_count(&self) -> usize {
        self.lowband.len()
            + self
                .details
                .iter()
                .map(|d| d.lh.len() + d.hl.len() + d.hh.len())
                .sum::<usize>()
    }

    /// Sum of squared coefficients.
    pub fn energy(&self) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        sq(&self.lowband)
            + self
                .details
                .iter()
                .map(|d| sq(&d.lh) + sq(&d.hl) + sq(&d.hh))
                .sum::<f64>()
    }

    fn validate(&self) -> Result<()> {
        let j = self.levels();
        if j == 0 {
            return Err(Error::shape("idwt2", "pyramid has no levels"));
        }
        for (level, d) in self.details.iter().enumerate() {
            let (h, w) = (self.height >> (level + 1), self.width >> (level + 1));
            let n = h * w;
            if d.height != h || d.width != w || d.lh.len() != n || d.hl.len() != n || d.hh.len() != n
            {
                return Err(Error::shape(
                    "idwt2",
                    format!("level {} subbands must be {h}x{w}", level + 1),
                ));
            }
        }
        let (h, w) = self.lowband_dims();
        if self.lowband.len() != h * w || h << j != self.height || w << j != self.width {
            return Err(Error::shape("idwt2", format!("lowband must be {h}x{w}")));
        }
        Ok(())
    }
}

fn check_divisible(h: usize, w: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::InvalidArgument(
            "wavelet decomposition needs at least one level".into(),
        ));
    }
    let div = 1usize << levels;
    if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
        return Err(Error::shape(
            "dwt2",
            format!("image {h}x{w} must have both sides divisible by 2^{levels} = {div}"),
        ));
    }
    Ok(())
}

/// One-dimensional periodic analysis of a strided line of even length.
fn analyze_line(src: &[f64], lo: &mut [f64], hi: &mut [f64], g: &[f64; 6]) {
    let n = src.len();
    let h = &DB3_LOWPASS;
    for k in 0..n / 2 {
        let (mut a, mut d) = (0.0, 0.0);
        for j in 0..6 {
            let x = src[(2 * k + j) % n];
            a += h[j] * x;
            d += g[j] * x;
        }
        lo[k] = a;
        hi[k] = d;
    }
}

/// Adjoint (and, for orthonormal filters, inverse) of [`analyze_line`].
fn synthesize_line(lo: &[f64], hi: &[f64], dst: &mut [f64], g: &[f64; 6]) {
    let n = dst.len();
    let h = &DB3_LOWPASS;
    dst.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..n / 2 {
        for j in 0..6 {
            dst[(2 * k + j) % n] += h[j] * lo[k] + g[j] * hi[k];
        }
    }
}

/// Single-level 2-D analysis of an `h x w` plane into (LL, LH, HL, HH).
fn analyze_level(plane: &[f64], h: usize, w: usize) -> [Vec<f64>; 4] {
    let g = db3_highpass();
    let (h2, w2) = (h / 2, w / 2);
    // rows
    let mut row_lo = vec![0.0; h * w2];
    let mut row_hi = vec![0.0; h * w2];
    for y in 0..h {
        analyze_line(
            &plane[y * w..(y + 1) * w],
            &mut row_lo[y * w2..(y + 1) * w2],
            &mut row_hi[y * w2..(y + 1) * w2],
            &g,
        );
    }
    // columns
    let mut out = [
        vec![0.0; h2 * w2],
        vec![0.0; h2 * w2],
        vec![0.0; h2 * w2],
        vec![0.0; h2 * w2],
    ];
    let mut col = vec![0.0; h];
    let mut lo = vec![0.0; h2];
    let mut hi = vec![0.0; h2];
    for (src, (first, second)) in [(&row_lo, (0, 1)), (&row_hi, (2, 3))] {
        for x in 0..w2 {
            for y in 0..h {
                col[y] = src[y * w2 + x];
            }
            analyze_line(&col, &mut lo, &mut hi, &g);
            for y in 0..h2 {
                out[first][y * w2 + x] = lo[y];
                out[second][y * w2 + x] = hi[y];
            }
        }
    }
    out
}

fn synthesize_level(ll: &[f64], lh: &[f64], hl: &[f64], hh: &[f64], h: usize, w: usize) -> Vec<f64> {
    let g = db3_highpass();
    let (h2, w2) = (h / 2, w / 2);
    let mut row_lo = vec![0.0; h * w2];
    let mut row_hi = vec![0.0; h * w2];
    let mut col = vec![0.0; h];
    let mut lo = vec![0.0; h2];
    let mut hi = vec![0.0; h2];
    for (dst, a, d) in [(&mut row_lo, ll, lh), (&mut row_hi, hl, hh)] {
        for x in 0..w2 {
            for y in 0..h2 {
                lo[y] = a[y * w2 + x];
                hi[y] = d[y * w2 + x];
            }
            synthesize_line(&lo, &hi, &mut col, &g);
            for y in 0..h {
                dst[y * w2 + x] = col[y];
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        synthesize_line(
            &row_lo[y * w2..(y + 1) * w2],
            &row_hi[y * w2..(y + 1) * w2],
            &mut out[y * w..(y + 1) * w],
            &g,
        );
    }
    out
}

/// Decomposes a raw `h x w` plane.
pub fn dwt2_plane(plane: &[f64], h: usize, w: usize, levels: usize) -> Result<WaveletPyramid> {
    check_divisible(h, w, levels)?;
    if plane.len() != h * w {
        return Err(Error::shape(
            "dwt2",
            format!("plane has {} values, expected {}", plane.len(), h * w),
        ));
    }
    let mut current = plane.to_vec();
    let (mut ch, mut cw) = (h, w);
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let [ll, lh, hl, hh] = analyze_level(&current, ch, cw);
        ch /= 2;
        cw /= 2;
        details.push(DetailBands {
            height: ch,
            width: cw,
            lh,
            hl,
            hh,
        });
        current = ll;
    }
    Ok(WaveletPyramid {
        height: h,
        width: w,
        boundary: Boundary::Periodic,
        details,
        lowband: current,
    })
}

/// Multilevel analysis of a single image `(1,1,H,W)`.
pub fn dwt2(image: &Tensor, levels: usize) -> Result<WaveletPyramid> {
    let s = image.shape();
    if s.batch != 1 || s.channels != 1 {
        return Err(Error::shape(
            "dwt2",
            format!("expected a single-plane image (1,1,H,W), got {s}"),
        ));
    }
    dwt2_plane(image.data(), s.height, s.width, levels)
}

/// Reconstructs the plane encoded by `pyramid`.
pub fn idwt2_plane(pyramid: &WaveletPyramid) -> Result<Vec<f64>> {
    pyramid.validate()?;
    let mut current = pyramid.lowband.clone();
    for d in pyramid.details.iter().rev() {
        current = synthesize_level(&current, &d.lh, &d.hl, &d.hh, d.height * 2, d.width * 2);
    }
    Ok(current)
}

/// Inverse of [`dwt2`]; returns a `(1,1,H,W)` image.
pub fn idwt2(pyramid: &WaveletPyramid) -> Result<Tensor> {
    let data = idwt2_plane(pyramid)?;
    Tensor::image(pyramid.height, pyramid.width, data)
}

/// LL-nulled residual of one plane.
pub fn residual_plane(plane: &[f64], h: usize, w: usize, levels: usize) -> Result<Vec<f64>> {
    let mut p = dwt2_plane(plane, h, w, levels)?;
    p.lowband.iter_mut().for_each(|v| *v = 0.0);
    idwt2_plane(&p)
}

/// Splits every plane of `image` into `(residual, lowband)` where the
/// residual is the reconstruction with the coarsest LL band zeroed and
/// `lowband = image - residual`.
pub fn wavelet_residual(image: &Tensor, levels: usize) -> Result<(Tensor, Tensor)> {
    let s = image.shape();
    check_divisible(s.height, s.width, levels)?;
    let plane = s.plane();
    let mut residual = Vec::with_capacity(s.numel());
    for chunk in image.data().chunks(plane) {
        residual.extend(residual_plane(chunk, s.height, s.width, levels)?);
    }
    let residual = Tensor::from_vec(s, residual)?;
    let lowband = image.sub(&residual)?;
    Ok((residual, lowband))
}

/// Lowband only (`image - residual`).
pub fn wavelet_lowband(image: &Tensor, levels: usize) -> Result<Tensor> {
    Ok(wavelet_residual(image, levels)?.1)
}

/// Shape helper for callers building single-plane images.
pub fn plane_shape(h: usize, w: usize) -> Shape {
    Shape::new(1, 1, h, w)
}
