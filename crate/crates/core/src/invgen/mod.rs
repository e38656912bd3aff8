//! Invertible generator: a stack of squeeze, 1x1 mix, stable coupling and
//! unsqueeze blocks. The denoiser `G` and the noise synthesizer `G^{-1}`
//! share one set of weights.

mod conv1x1;
mod coupling;
mod generator;
mod spectral;

pub use conv1x1::{conv1x1_forward, conv1x1_inverse, conv1x1_logdet, InvConv1x1, MixInit, MIN_ABS_DET};
pub use coupling::{
    coupling_forward, coupling_forward_tape, coupling_inverse, ConvParam, CouplingNet, FrozenNet, NetVars,
    COUPLING_SLOPE,
};
pub use generator::{
    generator_forward, generator_inverse, FrozenGenerator, GeneratorConfig, GeneratorParams, GeneratorVars,
    InvertibleBlock,
};
pub use spectral::{spectral_normalize, spectral_normalize_frozen, SpectralState, SN_WARMUP_ITERS};

use crate::error::{Error, Result};
use crate::tensor::{tape, Tensor};

/// `(N,1,H,W) -> (N,4,H/2,W/2)`; channel order is top-left, top-right,
/// bottom-left, bottom-right of each 2x2 cell.
pub fn squeeze(x: &Tensor) -> Result<Tensor> {
    if x.shape().channels != 1 {
        return Err(Error::shape(
            "squeeze",
            format!("expected a single-channel image, got {}", x.shape()),
        ));
    }
    tape::space_to_depth(x)
}

/// `(N,4,h,w) -> (N,1,2h,2w)`, inverse of [`squeeze`].
pub fn unsqueeze(x: &Tensor) -> Result<Tensor> {
    if x.shape().channels != 4 {
        return Err(Error::shape(
            "unsqueeze",
            format!("expected 4 channels, got {}", x.shape()),
        ));
    }
    tape::depth_to_space(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn squeeze_cell_order() {
        let x = Tensor::image(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = squeeze(&x).unwrap();
        assert_eq!(s.shape(), Shape::new(1, 4, 1, 1));
        assert_eq!(s.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unsqueeze(&s).unwrap(), x);
        assert!(squeeze(&Tensor::zeros(Shape::new(1, 1, 3, 4))).is_err());
        assert!(squeeze(&Tensor::zeros(Shape::new(1, 2, 4, 4))).is_err());
        assert!(unsqueeze(&Tensor::zeros(Shape::new(1, 3, 2, 2))).is_err());
    }
}
