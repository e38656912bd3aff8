use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{tape, Shape, Tensor};

/// Smallest `|det W|` accepted for an invertible mixing matrix.
pub const MIN_ABS_DET: f64 = 1e-8;

/// How a fresh mixing matrix is drawn.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MixInit {
    /// Random orthogonal matrix (log-det 0).
    Orthogonal,
    /// Identity plus i.i.d. Gaussian noise of the given scale.
    NearIdentity { noise: f64 },
}

/// Invertible 1x1 convolution over 4 channels: every pixel's channel row
/// vector is right-multiplied by the 4x4 matrix `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct InvConv1x1 {
    weight: Tensor,
    inverse: Vec<f64>,
    det: f64,
}

impl InvConv1x1 {
    pub const CHANNELS: usize = 4;

    pub fn weight_shape() -> Shape {
        Shape::new(1, 1, 4, 4)
    }

    pub fn identity() -> Self {
        Self::from_matrix(&linalg::identity(4)).expect("identity is invertible")
    }

    pub fn from_matrix(m: &[f64]) -> Result<Self> {
        let weight = Tensor::from_vec(Self::weight_shape(), m.to_vec())?;
        Self::from_weight(weight)
    }

    /// Wraps a `(1,1,4,4)` weight; fails if it is near-singular.
    pub fn from_weight(weight: Tensor) -> Result<Self> {
        if weight.numel() != 16 {
            return Err(Error::shape(
                "InvConv1x1",
                format!("mixing matrix must be 4x4, got {}", weight.shape()),
            ));
        }
        let mut layer = InvConv1x1 {
            weight,
            inverse: linalg::identity(4),
            det: 1.0,
        };
        layer.refresh()?;
        Ok(layer)
    }

    pub fn random<R: Rng + ?Sized>(init: MixInit, rng: &mut R) -> Self {
        let m = match init {
            MixInit::Orthogonal => linalg::random_orthogonal(4, rng),
            MixInit::NearIdentity { noise } => {
                let mut m = linalg::identity(4);
                for v in &mut m {
                    *v += noise * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
                }
                m
            }
        };
        Self::from_matrix(&m).unwrap_or_else(|_| Self::identity())
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    /// Mutable access for optimizers; call [`InvConv1x1::refresh`] afterwards.
    pub fn weight_mut(&mut self) -> &mut Tensor {
        &mut self.weight
    }

    /// Recomputes the cached determinant and inverse after the weight changed.
    pub fn refresh(&mut self) -> Result<()> {
        let det = linalg::determinant(self.weight.data(), 4);
        self.det = det;
        if !(det.abs() > MIN_ABS_DET) {
            return Err(Error::Singular { det: det.abs() });
        }
        self.inverse = linalg::inverse(self.weight.data(), 4).ok_or(Error::Singular { det: 0.0 })?;
        Ok(())
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn is_invertible(&self) -> bool {
        self.det.abs() > MIN_ABS_DET
    }

    pub fn inverse_matrix(&self) -> Result<&[f64]> {
        if !self.is_invertible() {
            return Err(Error::Singular {
                det: self.det.abs(),
            });
        }
        Ok(&self.inverse)
    }

    /// `log|det W|` for a single pixel.
    pub fn log_abs_det(&self) -> Result<f64> {
        if !self.is_invertible() {
            return Err(Error::Singular {
                det: self.det.abs(),
            });
        }
        Ok(self.det.abs().ln())
    }
}

fn check_four(op: &'static str, x: &Tensor) -> Result<()> {
    if x.shape().channels != 4 {
        return Err(Error::shape(
            op,
            format!("expected 4 channels, got {}", x.shape().channels),
        ));
    }
    Ok(())
}

/// `y = x W` per pixel.
pub fn conv1x1_forward(x: &Tensor, layer: &InvConv1x1) -> Result<Tensor> {
    check_four("conv1x1_forward", x)?;
    let out = tape::mix_channels(x.data(), x.shape(), layer.weight.data());
    Tensor::from_vec(x.shape(), out)
}

/// `x = y W^{-1}` per pixel.
pub fn conv1x1_inverse(y: &Tensor, layer: &InvConv1x1) -> Result<Tensor> {
    check_four("conv1x1_inverse", y)?;
    let inv = layer.inverse_matrix()?;
    let out = tape::mix_channels(y.data(), y.shape(), inv);
    Tensor::from_vec(y.shape(), out)
}

/// Log-determinant of the layer acting on an `h x w` map: `h w log|det W|`.
pub fn conv1x1_logdet(layer: &InvConv1x1, h: usize, w: usize) -> Result<f64> {
    Ok((h * w) as f64 * layer.log_abs_det()?)
}
