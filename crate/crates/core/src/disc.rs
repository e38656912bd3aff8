//! PatchGAN discriminator on wavelet residuals, with least-squares losses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BatchNormState, ConvGeometry, NormMode, Shape, Tape, Tensor, Var};

/// LeakyReLU slope after layers 1-3.
pub const DISC_SLOPE: f64 = 0.2;

const STRIDES: [usize; 4] = [2, 2, 1, 1];
const PAD: usize = 1;

/// Widths and kernel size of the four convolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscConfig {
    pub widths: [usize; 3],
    pub kernel: usize,
}

impl Default for DiscConfig {
    fn default() -> Self {
        DiscConfig {
            widths: [64, 128, 256],
            kernel: 4,
        }
    }
}

impl DiscConfig {
    fn channels(&self) -> [(usize, usize); 4] {
        let [a, b, c] = self.widths;
        [(1, a), (a, b), (b, c), (c, 1)]
    }

    /// Closed-form trainable parameter count. Layers 1 and 4 carry a bias;
    /// layers 2 and 3 are followed by batch norm (scale and shift) instead.
    pub fn parameter_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        let [a, b, c] = self.widths;
        (k2 * a + a) + (k2 * a * b + 2 * b) + (k2 * b * c + 2 * c) + (k2 * c + 1)
    }

    /// Spatial size of the score map for an `h x w` input.
    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (mut h, mut w) = (h, w);
        for s in STRIDES {
            if h + 2 * PAD < self.kernel || w + 2 * PAD < self.kernel {
                return None;
            }
            h = (h + 2 * PAD - self.kernel) / s + 1;
            w = (w + 2 * PAD - self.kernel) / s + 1;
        }
        Some((h, w))
    }

    /// Smallest square input giving a non-empty score map.
    pub fn min_input_size(&self) -> usize {
        (1..).find(|&n| self.output_size(n, n).is_some()).unwrap()
    }
}

/// Discriminator weights and batch-norm state.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    pub config: DiscConfig,
    /// `(out, in, k, k)` per layer.
    pub weights: [Tensor; 4],
    pub bias_first: Tensor,
    pub bias_last: Tensor,
    /// Batch-norm scale and shift for layers 2 and 3.
    pub gamma: [Tensor; 2],
    pub beta: [Tensor; 2],
    pub bn: [BatchNormState; 2],
}

/// Tape handles of the discriminator parameters.
#[derive(Clone, Copy, Debug)]
pub struct DiscVars {
    pub weights: [Var; 4],
    pub bias_first: Var,
    pub bias_last: Var,
    pub gamma: [Var; 2],
    pub beta: [Var; 2],
}

impl DiscVars {
    /// Leaves in [`DiscriminatorParams::params`] order.
    pub fn leaves(&self) -> Vec<Var> {
        vec![
            self.weights[0],
            self.bias_first,
            self.weights[1],
            self.gamma[0],
            self.beta[0],
            self.weights[2],
            self.gamma[1],
            self.beta[1],
            self.weights[3],
            self.bias_last,
        ]
    }
}

impl DiscriminatorParams {
    /// All-zero weights (unit batch-norm scale).
    pub fn zeros(config: DiscConfig) -> Self {
        let k = config.kernel;
        let ch = config.channels();
        let [_, b, c] = config.widths;
        DiscriminatorParams {
            config,
            weights: ch.map(|(i, o)| Tensor::zeros(Shape::new(o, i, k, k))),
            bias_first: Tensor::zeros(Shape::new(1, config.widths[0], 1, 1)),
            bias_last: Tensor::zeros(Shape::new(1, 1, 1, 1)),
            gamma: [b, c].map(|n| Tensor::full(Shape::new(1, n, 1, 1), 1.0)),
            beta: [b, c].map(|n| Tensor::zeros(Shape::new(1, n, 1, 1))),
            bn: [BatchNormState::new(b), BatchNormState::new(c)],
        }
    }

    /// Weights drawn from N(0, 0.02^2), zero biases.
    pub fn new<R: Rng + ?Sized>(config: DiscConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(config);
        for w in &mut p.weights {
            *w = Tensor::randn(w.shape(), 0.02, rng);
        }
        p
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![
            &self.weights[0],
            &self.bias_first,
            &self.weights[1],
            &self.gamma[0],
            &self.beta[0],
            &self.weights[2],
            &self.gamma[1],
            &self.beta[1],
            &self.weights[3],
            &self.bias_last,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let [w0, w1, w2, w3] = &mut self.weights;
        let [g0, g1] = &mut self.gamma;
        let [b0, b1] = &mut self.beta;
        vec![
            w0,
            &mut self.bias_first,
            w1,
            g0,
            b0,
            w2,
            g1,
            b1,
            w3,
            &mut self.bias_last,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.numel()).sum()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> DiscVars {
        let mut leaf = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let w0 = leaf(&self.weights[0]);
        let bias_first = leaf(&self.bias_first);
        let w1 = leaf(&self.weights[1]);
        let g0 = leaf(&self.gamma[0]);
        let b0 = leaf(&self.beta[0]);
        let w2 = leaf(&self.weights[2]);
        let g1 = leaf(&self.gamma[1]);
        let b1 = leaf(&self.beta[1]);
        let w3 = leaf(&self.weights[3]);
        let bias_last = leaf(&self.bias_last);
        DiscVars {
            weights: [w0, w1, w2, w3],
            bias_first,
            bias_last,
            gamma: [g0, g1],
            beta: [b0, b1],
        }
    }

    fn check_input(&self, s: Shape) -> Result<()> {
        if s.channels != 1 {
            return Err(Error::shape(
                "discriminate",
                format!("expected a single-channel residual, got {s}"),
            ));
        }
        if self.config.output_size(s.height, s.width).is_none() {
            let m = self.config.min_input_size();
            return Err(Error::shape(
                "discriminate",
                format!(
                    "input {}x{} is too small: height and width must be at least {m}",
                    s.height, s.width
                ),
            ));
        }
        Ok(())
    }

    /// Score map on the tape. Train mode uses batch statistics and updates
    /// the running estimates.
    pub fn forward_tape(&mut self, tape: &mut Tape, vars: &DiscVars, x: Var, mode: NormMode) -> Result<Var> {
        self.check_input(tape.value(x).shape())?;
        let h = tape.conv2d(x, vars.weights[0], Some(vars.bias_first), STRIDES[0], PAD)?;
        let mut h = tape.leaky_relu(h, DISC_SLOPE);
        for i in 0..2 {
            h = tape.conv2d(h, vars.weights[i + 1], None, STRIDES[i + 1], PAD)?;
            h = tape.batch_norm(h, vars.gamma[i], vars.beta[i], &mut self.bn[i], mode)?;
            h = tape.leaky_relu(h, DISC_SLOPE);
        }
        tape.conv2d(h, vars.weights[3], Some(vars.bias_last), STRIDES[3], PAD)
    }

    /// Layer-1 pre-activation feature map.
    pub fn first_layer(&self, x: &Tensor) -> Result<Tensor> {
        let g = ConvGeometry::new(x.shape().dims(), self.weights[0].shape().dims(), STRIDES[0], PAD)?;
        let (out, _) = crate::tensor::kernels::conv2d_forward(
            x.data(),
            x.shape().batch,
            &g,
            self.weights[0].data(),
            Some(self.bias_first.data()),
            false,
        );
        Tensor::from_vec(Shape::new(x.shape().batch, g.out_channels, g.out_h, g.out_w), out)
    }
}

/// `D(r)` outside of training: running batch-norm statistics, no state update.
pub fn discriminate(r: &Tensor, params: &DiscriminatorParams) -> Result<Tensor> {
    let mut p = params.clone();
    let mut tape = Tape::new();
    let vars = p.bind(&mut tape, false);
    let x = tape.constant(r.clone());
    let y = p.forward_tape(&mut tape, &vars, x, NormMode::Eval)?;
    Ok(tape.value(y).clone())
}

/// `1/2 mean((real-1)^2) + 1/2 mean(fake^2)`.
pub fn lsgan_d_loss(real: &Tensor, fake: &Tensor) -> f64 {
    0.5 * real.map(|v| (v - 1.0) * (v - 1.0)).mean() + 0.5 * fake.map(|v| v * v).mean()
}

/// `1/2 mean((fake-1)^2)`.
pub fn lsgan_g_loss(fake: &Tensor) -> f64 {
    0.5 * fake.map(|v| (v - 1.0) * (v - 1.0)).mean()
}

pub fn lsgan_d_loss_tape(tape: &mut Tape, real: Var, fake: Var) -> Result<Var> {
    let r = tape.add_scalar(real, -1.0);
    let r = tape.square(r);
    let r = tape.mean(r);
    let f = tape.square(fake);
    let f = tape.mean(f);
    let s = tape.add(r, f)?;
    Ok(tape.scale(s, 0.5))
}

pub fn lsgan_g_loss_tape(tape: &mut Tape, fake: Var) -> Var {
    let f = tape.add_scalar(fake, -1.0);
    let f = tape.square(f);
    let f = tape.mean(f);
    tape.scale(f, 0.5)
}
