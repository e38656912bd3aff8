//! Precision-generic compute kernels shared by the autodiff tape (64-bit)
//! and the frozen inference path (32- or 64-bit).

use std::fmt::Debug;

use crate::error::{Error, Result};

/// Floating-point element type usable by the kernels.
pub trait Real:
    num_traits::Float + Copy + Default + Debug + Send + Sync + std::iter::Sum + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `C = alpha * A B + beta * C` on strided row/column layouts.
    ///
    /// # Safety
    /// Strides and dimensions must describe in-bounds accesses of the
    /// underlying buffers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Matrix operand: a buffer viewed as `rows x cols`, optionally transposed.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a, T: Real> MatRef<'a, T> {
    /// Row-major `rows x cols` view.
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        MatRef {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    /// Transposed view of a row-major `rows x cols` buffer (logical shape `cols x rows`).
    pub fn t(data: &'a [T], rows: usize, cols: usize) -> Self {
        MatRef {
            data,
            rows,
            cols,
            transposed: true,
        }
    }

    fn logical(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = A B + beta * out`, with `out` row-major `m x n`.
pub fn gemm<T: Real>(a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, out: &mut [T]) {
    let (m, k) = a.logical();
    let (k2, n) = b.logical();
    assert_eq!(k, k2, "gemm inner dimensions");
    assert!(a.data.len() >= a.rows * a.cols && b.data.len() >= b.rows * b.cols);
    assert_eq!(out.len(), m * n, "gemm output size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.iter_mut().for_each(|v| *v = *v * beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the asserts above bound every access of the three views.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// Spatial arithmetic of one 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Validates dimensions; `input` and `weight` are `[n, c, h, w]` and `[out, in, kh, kw]`.
    pub fn new(input: [usize; 4], weight: [usize; 4], stride: usize, pad: usize) -> Result<Self> {
        let [_, c, h, w] = input;
        let [out, cin, kh, kw] = weight;
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
        }
        if cin != c {
            return Err(Error::shape(
                "conv2d",
                format!("weight in_channels = {cin} but input has {c} channels"),
            ));
        }
        if kh == 0 || kw == 0 {
            return Err(Error::shape("conv2d", "kernel height/width must be >= 1"));
        }
        if h + 2 * pad < kh {
            return Err(Error::shape(
                "conv2d",
                format!("input height {h} (+2*{pad} pad) smaller than kernel height {kh}"),
            ));
        }
        if w + 2 * pad < kw {
            return Err(Error::shape(
                "conv2d",
                format!("input width {w} (+2*{pad} pad) smaller than kernel width {kw}"),
            ));
        }
        Ok(ConvGeometry {
            in_channels: c,
            in_h: h,
            in_w: w,
            out_channels: out,
            kh,
            kw,
            stride,
            pad,
            out_h: (h + 2 * pad - kh) / stride + 1,
            out_w: (w + 2 * pad - kw) / stride + 1,
        })
    }

    /// Rows of the unfolded patch matrix.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kh * self.kw
    }

    pub fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_plane(&self) -> usize {
        self.in_h * self.in_w
    }

    /// True when the input itself is already the patch matrix.
    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfolds one sample `(c, h, w)` into a `(c*kh*kw) x (out_h*out_w)` matrix.
pub fn im2col<T: Real>(x: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let p = g.out_plane();
    debug_assert_eq!(cols.len(), g.patch_len() * p);
    for c in 0..g.in_channels {
        let plane = &x[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.in_w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds patch gradients back into `dx`.
pub fn col2im<T: Real>(cols: &[T], g: &ConvGeometry, dx: &mut [T]) {
    let p = g.out_plane();
    for c in 0..g.in_channels {
        let plane = &mut dx[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let base = iy as usize * g.in_w;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.in_w {
                            plane[base + ix as usize] =
                                plane[base + ix as usize] + src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of a batch. Returns the output and, when requested,
/// the per-sample patch matrices for reuse in the backward pass.
pub fn conv2d_forward<T: Real>(
    x: &[T],
    batch: usize,
    g: &ConvGeometry,
    weight: &[T],
    bias: Option<&[T]>,
    keep_cols: bool,
) -> (Vec<T>, Vec<Vec<T>>) {
    let k = g.patch_len();
    let p = g.out_plane();
    let in_per = g.in_channels * g.in_plane();
    let out_per = g.out_channels * p;
    let mut out = vec![T::zero(); batch * out_per];
    let mut saved = Vec::new();
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); k * p]
    };
    for n in 0..batch {
        let xs = &x[n * in_per..(n + 1) * in_per];
        let o = &mut out[n * out_per..(n + 1) * out_per];
        if let Some(b) = bias {
            for (co, chunk) in o.chunks_mut(p).enumerate() {
                chunk.iter_mut().for_each(|v| *v = b[co]);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        if g.is_pointwise() {
            gemm(
                MatRef::new(weight, g.out_channels, k),
                MatRef::new(xs, k, p),
                beta,
                o,
            );
        } else {
            im2col(xs, g, &mut cols);
            gemm(
                MatRef::new(weight, g.out_channels, k),
                MatRef::new(&cols, k, p),
                beta,
                o,
            );
            if keep_cols {
                saved.push(cols.clone());
            }
        }
    }
    (out, saved)
}

/// Gradients of a convolution given the upstream gradient `dy`.
///
/// `cols` are the patch matrices saved by [`conv2d_forward`]; they are only
/// read when `dw` is requested, and pointwise convolutions use `x` directly.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Real>(
    x: &[T],
    cols: &[Vec<T>],
    batch: usize,
    g: &ConvGeometry,
    weight: &[T],
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let k = g.patch_len();
    let p = g.out_plane();
    let in_per = g.in_channels * g.in_plane();
    let out_per = g.out_channels * p;
    let mut dcols = if dx.is_some() && !g.is_pointwise() {
        vec![T::zero(); k * p]
    } else {
        Vec::new()
    };
    for n in 0..batch {
        let dyn_ = &dy[n * out_per..(n + 1) * out_per];
        if let Some(dw) = dw.as_deref_mut() {
            let patches: &[T] = if g.is_pointwise() {
                &x[n * in_per..(n + 1) * in_per]
            } else {
                &cols[n]
            };
            gemm(
                MatRef::new(dyn_, g.out_channels, p),
                MatRef::t(patches, k, p),
                T::one(),
                dw,
            );
        }
        if let Some(db) = db.as_deref_mut() {
            for (co, chunk) in dyn_.chunks(p).enumerate() {
                db[co] = db[co] + chunk.iter().copied().sum::<T>();
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxs = &mut dx[n * in_per..(n + 1) * in_per];
            if g.is_pointwise() {
                gemm(
                    MatRef::t(weight, g.out_channels, k),
                    MatRef::new(dyn_, g.out_channels, p),
                    T::one(),
                    dxs,
                );
            } else {
                gemm(
                    MatRef::t(weight, g.out_channels, k),
                    MatRef::new(dyn_, g.out_channels, p),
                    T::zero(),
                    &mut dcols,
                );
                col2im(&dcols, g, dxs);
            }
        }
    }
}

#[inline]
pub fn leaky_relu<T: Real>(x: T, slope: T) -> T {
    if x >= T::zero() {
        x
    } else {
        x * slope
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // A = [[1,2],[3,4]], B = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut out = [0.0; 4];
        gemm(MatRef::new(&a, 2, 2), MatRef::new(&b, 2, 2), 0.0, &mut out);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
        gemm(MatRef::t(&a, 2, 2), MatRef::new(&b, 2, 2), 0.0, &mut out);
        assert_eq!(out, [26.0, 30.0, 38.0, 44.0]);
        gemm(MatRef::new(&a, 2, 2), MatRef::t(&b, 2, 2), 0.0, &mut out);
        assert_eq!(out, [17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn geometry_rejects_bad_shapes() {
        assert!(ConvGeometry::new([1, 3, 8, 8], [4, 2, 3, 3], 1, 1).is_err());
        assert!(ConvGeometry::new([1, 3, 8, 8], [4, 3, 3, 3], 0, 1).is_err());
        assert!(ConvGeometry::new([1, 1, 2, 2], [1, 1, 4, 4], 1, 0).is_err());
        let g = ConvGeometry::new([1, 1, 64, 64], [64, 1, 4, 4], 2, 1).unwrap();
        assert_eq!((g.out_h, g.out_w), (32, 32));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeometry::new([1, 2, 5, 6], [3, 2, 3, 2], 2, 1).unwrap();
        let x: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let c: Vec<f64> = (0..g.patch_len() * g.out_plane())
            .map(|i| ((i * 13) % 7) as f64 - 3.0)
            .collect();
        let mut cols = vec![0.0; c.len()];
        im2col(&x, &g, &mut cols);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&c, &g, &mut back);
        let rhs: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }
}
