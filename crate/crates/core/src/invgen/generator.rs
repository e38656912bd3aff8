use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv1x1::{InvConv1x1, MixInit};
use super::coupling::{
    coupling_forward_in_place, coupling_forward_tape, coupling_inverse_in_place, CouplingNet,
    FrozenNet, NetVars,
};
use crate::error::{Error, Result};
use crate::linalg::top_singular_value;
use crate::tensor::tape::{depth_to_space_into, space_to_depth_into};
use crate::tensor::{Real, Shape, Tape, Tensor, Var};

/// Architecture of the invertible generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Number of invertible blocks `L`.
    pub blocks: usize,
    /// Latent width `c` of the coupling nets.
    pub width: usize,
    /// Wavelet decomposition level `J` of the residual domain.
    pub levels: usize,
    pub mix_init: MixInit,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            blocks: 4,
            width: 256,
            levels: 6,
            mix_init: MixInit::NearIdentity { noise: 0.01 },
        }
    }
}

impl GeneratorConfig {
    /// Closed-form trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let c = self.width;
        self.blocks * (16 + 4 * (c * c + 38 * c + 1))
    }
}

/// One squeeze -> 1x1 mix -> coupling -> unsqueeze block.
#[derive(Clone, Debug, PartialEq)]
pub struct InvertibleBlock {
    pub mix: InvConv1x1,
    pub nets: [CouplingNet; 4],
}

/// Parameters of `G`; the inverse map shares them.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub config: GeneratorConfig,
    pub blocks: Vec<InvertibleBlock>,
}

/// Tape handles of all generator parameters.
#[derive(Clone, Debug)]
pub struct GeneratorVars {
    pub mix: Vec<Var>,
    pub nets: Vec<[NetVars; 4]>,
}

impl GeneratorVars {
    /// Leaves in [`GeneratorParams::params`] order.
    pub fn leaves(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for (w, nets) in self.mix.iter().zip(&self.nets) {
            out.push(*w);
            for n in nets {
                out.extend_from_slice(&n.leaves);
            }
        }
        out
    }
}

impl GeneratorParams {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Self {
        let blocks = (0..config.blocks)
            .map(|_| InvertibleBlock {
                mix: InvConv1x1::random(config.mix_init, rng),
                nets: std::array::from_fn(|_| CouplingNet::new(config.width, rng)),
            })
            .collect();
        GeneratorParams { config, blocks }
    }

    /// Exact identity map: `W = I` and zero coupling outputs.
    pub fn identity<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Self {
        let mut g = GeneratorParams::new(config, rng);
        for b in &mut g.blocks {
            b.mix = InvConv1x1::identity();
        }
        g
    }

    /// Fills every coupling output layer with Gaussian noise of scale `std`
    /// so the nets are non-trivial (useful for invertibility checks).
    pub fn randomize_outputs<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R) {
        for b in &mut self.blocks {
            for n in &mut b.nets {
                n.output.weight = Tensor::randn(n.output.weight.shape(), std, rng);
                n.output.bias = Tensor::randn(n.output.bias.shape(), std, rng);
            }
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.push(b.mix.weight());
            for n in &b.nets {
                out.extend(n.params());
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(b.mix.weight_mut());
            for n in &mut b.nets {
                out.extend(n.params_mut());
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.numel()).sum()
    }

    /// Refreshes cached inverses; reports the first singular mixing matrix.
    pub fn refresh(&mut self) -> Result<()> {
        let mut first_err = None;
        for b in &mut self.blocks {
            if let Err(e) = b.mix.refresh() {
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    }

    /// `|det W_i|` per block.
    pub fn mix_determinants(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.mix.det().abs()).collect()
    }

    /// Registers all parameters on the tape.
    pub fn bind(&mut self, tape: &mut Tape, train: bool, trainable: bool) -> Result<GeneratorVars> {
        let mut mix = Vec::with_capacity(self.blocks.len());
        let mut nets = Vec::with_capacity(self.blocks.len());
        for b in &mut self.blocks {
            let w = b.mix.weight().clone();
            mix.push(if trainable { tape.param(w) } else { tape.constant(w) });
            let mut vars = Vec::with_capacity(4);
            for n in &mut b.nets {
                vars.push(n.bind(tape, train, trainable)?);
            }
            nets.push(vars.try_into().expect("four nets"));
        }
        Ok(GeneratorVars { mix, nets })
    }

    /// Differentiable forward pass of `(N,1,H,W)` input.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &GeneratorVars, r: Var) -> Result<Var> {
        check_input(tape.value(r).shape())?;
        let mut x = r;
        for (w, nets) in vars.mix.iter().zip(&vars.nets) {
            let s = tape.space_to_depth(x)?;
            let m = tape.channel_mix(s, *w)?;
            let c = coupling_forward_tape(tape, m, nets)?;
            x = tape.depth_to_space(c)?;
        }
        Ok(x)
    }

    /// Snapshot for inference in precision `T`, with spectral estimates frozen.
    pub fn frozen<T: Real>(&self) -> Result<FrozenGenerator<T>> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let inv = b.mix.inverse_matrix()?;
                Ok(FrozenBlock {
                    mix: to_array(b.mix.weight().data()),
                    mix_inv: to_array(inv),
                    nets: b.nets.each_ref().map(CouplingNet::frozen::<T>),
                })
            })
            .collect::<Result<_>>()?;
        Ok(FrozenGenerator { blocks })
    }

    /// Upper bound on the Lipschitz constant of `G`:
    /// `prod_i sigma_max(W_i) * prod_j (1 + L_j)`, where `L_j` bounds the
    /// coupling net `F_j` by the product over its layers of
    /// `sqrt(kh*kw) * sigma_max(reshaped kernel)` (an operator-norm bound for
    /// a zero-padded convolution).
    pub fn lipschitz_bound(&self) -> f64 {
        const ITERS: usize = 500;
        let mut bound = 1.0;
        for b in &self.blocks {
            bound *= top_singular_value(b.mix.weight().data(), 4, 4, ITERS);
            for n in &b.nets {
                let (iw, hw) = n.normalized_weights();
                let mut l = 1.0;
                for w in [&iw, &hw, &n.output.weight] {
                    let s = w.shape();
                    let rows = s.batch;
                    let cols = w.numel() / rows;
                    let area = (s.height * s.width) as f64;
                    l *= area.sqrt() * top_singular_value(w.data(), rows, cols, ITERS);
                }
                bound *= 1.0 + l;
            }
        }
        bound
    }

    /// Total log-determinant of `G` on `(H, W)` inputs. Coupling steps are
    /// volume preserving, so only the mixing matrices contribute, each on
    /// the `H/2 x W/2` squeezed grid.
    pub fn log_det(&self, height: usize, width: usize) -> Result<f64> {
        check_input(Shape::new(1, 1, height, width))?;
        let mut total = 0.0;
        for b in &self.blocks {
            total += super::conv1x1::conv1x1_logdet(&b.mix, height / 2, width / 2)?;
        }
        Ok(total)
    }
}

fn to_array<T: Real>(m: &[f64]) -> [T; 16] {
    std::array::from_fn(|i| T::from_f64(m[i]))
}

fn check_input(s: Shape) -> Result<()> {
    if s.channels != 1 {
        return Err(Error::shape(
            "generator",
            format!("expected single-channel input, got {s}"),
        ));
    }
    if s.height % 2 != 0 || s.width % 2 != 0 || s.height == 0 || s.width == 0 {
        return Err(Error::shape(
            "generator",
            format!("height and width must be even, got {}x{}", s.height, s.width),
        ));
    }
    Ok(())
}

struct FrozenBlock<T> {
    mix: [T; 16],
    mix_inv: [T; 16],
    nets: [FrozenNet<T>; 4],
}

/// Generator with fixed weights in precision `T`, used for inference and
/// for the exact inverse.
pub struct FrozenGenerator<T> {
    blocks: Vec<FrozenBlock<T>>,
}

impl<T: Real> FrozenGenerator<T> {
    fn run(&self, x: &[T], s: Shape, inverse: bool) -> Result<Vec<T>> {
        check_input(s)?;
        if x.len() != s.numel() {
            return Err(Error::shape("generator", "buffer length does not match shape"));
        }
        let sq = Shape::new(s.batch, 4, s.height / 2, s.width / 2);
        let mut img = x.to_vec();
        let mut packed = vec![T::zero(); x.len()];
        let order: Box<dyn Iterator<Item = &FrozenBlock<T>>> = if inverse {
            Box::new(self.blocks.iter().rev())
        } else {
            Box::new(self.blocks.iter())
        };
        for b in order {
            space_to_depth_into(&img, s, &mut packed);
            if inverse {
                coupling_inverse_in_place(&mut packed, sq, &b.nets)?;
                packed = crate::tensor::tape::mix_channels(&packed, sq, &b.mix_inv);
            } else {
                packed = crate::tensor::tape::mix_channels(&packed, sq, &b.mix);
                coupling_forward_in_place(&mut packed, sq, &b.nets)?;
            }
            depth_to_space_into(&packed, s, &mut img);
        }
        Ok(img)
    }

    /// `G(r)` on a raw `(N,1,H,W)` buffer.
    pub fn forward(&self, x: &[T], s: Shape) -> Result<Vec<T>> {
        self.run(x, s, false)
    }

    /// `G^{-1}(y)` on a raw `(N,1,H,W)` buffer.
    pub fn inverse(&self, y: &[T], s: Shape) -> Result<Vec<T>> {
        self.run(y, s, true)
    }
}

impl FrozenGenerator<f64> {
    pub fn forward_tensor(&self, r: &Tensor) -> Result<Tensor> {
        Tensor::from_vec(r.shape(), self.forward(r.data(), r.shape())?)
    }

    pub fn inverse_tensor(&self, y: &Tensor) -> Result<Tensor> {
        Tensor::from_vec(y.shape(), self.inverse(y.data(), y.shape())?)
    }
}

/// `G(r)` in 64-bit with frozen spectral estimates.
pub fn generator_forward(r: &Tensor, params: &GeneratorParams) -> Result<Tensor> {
    params.frozen::<f64>()?.forward_tensor(r)
}

/// `G^{-1}(s)`: blocks in reverse order, each undoing coupling then mixing.
pub fn generator_inverse(s: &Tensor, params: &GeneratorParams) -> Result<Tensor> {
    params.frozen::<f64>()?.inverse_tensor(s)
}
