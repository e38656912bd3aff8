use rand::Rng;

use super::spectral::{SpectralState, SN_WARMUP_ITERS};
use crate::error::{Error, Result};
use crate::tensor::kernels::{self, ConvGeometry};
use crate::tensor::{Real, Shape, Tape, Tensor, Var};

/// Activation slope used after the hidden layers of a coupling net.
pub const COUPLING_SLOPE: f64 = 0.2;

/// Weight `(out, in, kh, kw)` and bias `(1, out, 1, 1)` of one convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParam {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvParam {
    pub fn zeros(out: usize, input: usize, k: usize) -> Self {
        ConvParam {
            weight: Tensor::zeros(Shape::new(out, input, k, k)),
            bias: Tensor::zeros(Shape::new(1, out, 1, 1)),
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` for weight and bias.
    pub fn uniform<R: Rng + ?Sized>(out: usize, input: usize, k: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((input * k * k) as f64).sqrt();
        ConvParam {
            weight: Tensor::uniform(Shape::new(out, input, k, k), -bound, bound, rng),
            bias: Tensor::uniform(Shape::new(1, out, 1, 1), -bound, bound, rng),
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape().height
    }

    pub fn numel(&self) -> usize {
        self.weight.numel() + self.bias.numel()
    }
}

/// The network `F_i` inside a coupling step: three input maps in, one map out.
///
/// `3x3 conv (3->c, SN) -> LReLU -> 1x1 conv (c->c, SN) -> LReLU -> 3x3 conv (c->1)`.
/// The output convolution starts at zero so each coupling step starts as
/// the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingNet {
    pub input: ConvParam,
    pub hidden: ConvParam,
    pub output: ConvParam,
    pub sn_input: SpectralState,
    pub sn_hidden: SpectralState,
}

/// Tape handles of one coupling net's parameters, after normalization.
#[derive(Clone, Copy, Debug)]
pub struct NetVars {
    pub input_w: Var,
    pub input_b: Var,
    pub hidden_w: Var,
    pub hidden_b: Var,
    pub output_w: Var,
    pub output_b: Var,
    /// Leaves in parameter order (raw weights, not normalized ones).
    pub leaves: [Var; 6],
}

impl CouplingNet {
    pub fn new<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        let input = ConvParam::uniform(width, 3, 3, rng);
        let hidden = ConvParam::uniform(width, width, 1, rng);
        let output = ConvParam::zeros(1, width, 3);
        let sn_input = SpectralState::new(&input.weight, SN_WARMUP_ITERS, rng);
        let sn_hidden = SpectralState::new(&hidden.weight, SN_WARMUP_ITERS, rng);
        CouplingNet {
            input,
            hidden,
            output,
            sn_input,
            sn_hidden,
        }
    }

    pub fn width(&self) -> usize {
        self.input.weight.shape().batch
    }

    /// Closed-form count: `27c + c + c^2 + c + 9c + 1`.
    pub fn parameter_count(&self) -> usize {
        self.input.numel() + self.hidden.numel() + self.output.numel()
    }

    pub fn params(&self) -> [&Tensor; 6] {
        [
            &self.input.weight,
            &self.input.bias,
            &self.hidden.weight,
            &self.hidden.bias,
            &self.output.weight,
            &self.output.bias,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.input.weight,
            &mut self.input.bias,
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.output.weight,
            &mut self.output.bias,
        ]
    }

    /// Effective (normalized) input and hidden weights with frozen estimates.
    pub fn normalized_weights(&self) -> (Tensor, Tensor) {
        (
            super::spectral::spectral_normalize_frozen(&self.input.weight, &self.sn_input),
            super::spectral::spectral_normalize_frozen(&self.hidden.weight, &self.sn_hidden),
        )
    }

    /// Registers parameters on the tape. With `train`, one power-iteration
    /// step refines each spectral estimate before normalizing.
    pub fn bind(&mut self, tape: &mut Tape, train: bool, trainable: bool) -> Result<NetVars> {
        if train {
            self.sn_input.power_step(&self.input.weight);
            self.sn_hidden.power_step(&self.hidden.weight);
        }
        let leaf = |tape: &mut Tape, t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let iw = leaf(tape, &self.input.weight);
        let ib = leaf(tape, &self.input.bias);
        let hw = leaf(tape, &self.hidden.weight);
        let hb = leaf(tape, &self.hidden.bias);
        let ow = leaf(tape, &self.output.weight);
        let ob = leaf(tape, &self.output.bias);
        let input_w = tape.spectral_norm(iw, &self.sn_input.u, &self.sn_input.v)?;
        let hidden_w = tape.spectral_norm(hw, &self.sn_hidden.u, &self.sn_hidden.v)?;
        Ok(NetVars {
            input_w,
            input_b: ib,
            hidden_w,
            hidden_b: hb,
            output_w: ow,
            output_b: ob,
            leaves: [iw, ib, hw, hb, ow, ob],
        })
    }

    /// Applies the net on the tape to a 3-channel input.
    pub fn forward_tape(tape: &mut Tape, vars: &NetVars, x: Var) -> Result<Var> {
        let h = tape.conv2d(x, vars.input_w, Some(vars.input_b), 1, 1)?;
        let h = tape.leaky_relu(h, COUPLING_SLOPE);
        let h = tape.conv2d(h, vars.hidden_w, Some(vars.hidden_b), 1, 0)?;
        let h = tape.leaky_relu(h, COUPLING_SLOPE);
        tape.conv2d(h, vars.output_w, Some(vars.output_b), 1, 1)
    }

    pub fn frozen<T: Real>(&self) -> FrozenNet<T> {
        let (iw, hw) = self.normalized_weights();
        FrozenNet {
            layers: [
                FrozenConv::new(&iw, &self.input.bias, 1, true),
                FrozenConv::new(&hw, &self.hidden.bias, 0, true),
                FrozenConv::new(&self.output.weight, &self.output.bias, 1, false),
            ],
        }
    }
}

/// A convolution with fixed weights in precision `T`.
#[derive(Clone, Debug)]
pub struct FrozenConv<T> {
    weight: Vec<T>,
    bias: Vec<T>,
    dims: [usize; 4],
    pad: usize,
    activate: bool,
}

impl<T: Real> FrozenConv<T> {
    fn new(weight: &Tensor, bias: &Tensor, pad: usize, activate: bool) -> Self {
        FrozenConv {
            weight: weight.data().iter().map(|&v| T::from_f64(v)).collect(),
            bias: bias.data().iter().map(|&v| T::from_f64(v)).collect(),
            dims: weight.shape().dims(),
            pad,
            activate,
        }
    }

    fn apply(&self, x: &[T], s: Shape) -> Result<(Vec<T>, Shape)> {
        let g = ConvGeometry::new(s.dims(), self.dims, 1, self.pad)?;
        let (mut out, _) = kernels::conv2d_forward(x, s.batch, &g, &self.weight, Some(&self.bias), false);
        if self.activate {
            let slope = T::from_f64(COUPLING_SLOPE);
            out.iter_mut().for_each(|v| *v = kernels::leaky_relu(*v, slope));
        }
        Ok((out, Shape::new(s.batch, g.out_channels, g.out_h, g.out_w)))
    }
}

/// A coupling net with frozen weights, for inference in precision `T`.
#[derive(Clone, Debug)]
pub struct FrozenNet<T> {
    layers: [FrozenConv<T>; 3],
}

impl<T: Real> FrozenNet<T> {
    /// `(N,3,h,w) -> (N,1,h,w)`.
    pub fn apply(&self, x: &[T], s: Shape) -> Result<Vec<T>> {
        let (h, s) = self.layers[0].apply(x, s)?;
        let (h, s) = self.layers[1].apply(&h, s)?;
        Ok(self.layers[2].apply(&h, s)?.0)
    }
}

/// Gathers channels `idx` of a `(N,4,h,w)` buffer into `(N,3,h,w)`.
fn gather3<T: Copy>(x: &[T], s: Shape, idx: [usize; 3], out: &mut Vec<T>) {
    let p = s.plane();
    out.clear();
    for n in 0..s.batch {
        for &c in &idx {
            let o = (n * 4 + c) * p;
            out.extend_from_slice(&x[o..o + p]);
        }
    }
}

/// Conditioning channels of step `i`: every channel except `i`, in order.
const CONDITION: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// In-place stable coupling on a `(N,4,h,w)` buffer. Each step reads the
/// buffer as already updated by earlier steps, so step `i` adds
/// `F_i` of `(y_1..y_{i-1}, x_{i+1}..x_4)` to channel `i`.
pub fn coupling_forward_in_place<T: Real>(x: &mut [T], s: Shape, nets: &[FrozenNet<T>; 4]) -> Result<()> {
    let p = s.plane();
    let cs = Shape::new(s.batch, 3, s.height, s.width);
    let mut cond = Vec::with_capacity(cs.numel());
    for i in 0..4 {
        gather3(x, s, CONDITION[i], &mut cond);
        let f = nets[i].apply(&cond, cs)?;
        for n in 0..s.batch {
            let o = (n * 4 + i) * p;
            for (xv, fv) in x[o..o + p].iter_mut().zip(&f[n * p..(n + 1) * p]) {
                *xv = *xv + *fv;
            }
        }
    }
    Ok(())
}

/// Exact inverse of [`coupling_forward_in_place`]: subtract in reverse order.
pub fn coupling_inverse_in_place<T: Real>(y: &mut [T], s: Shape, nets: &[FrozenNet<T>; 4]) -> Result<()> {
    let p = s.plane();
    let cs = Shape::new(s.batch, 3, s.height, s.width);
    let mut cond = Vec::with_capacity(cs.numel());
    for i in (0..4).rev() {
        gather3(y, s, CONDITION[i], &mut cond);
        let f = nets[i].apply(&cond, cs)?;
        for n in 0..s.batch {
            let o = (n * 4 + i) * p;
            for (yv, fv) in y[o..o + p].iter_mut().zip(&f[n * p..(n + 1) * p]) {
                *yv = *yv - *fv;
            }
        }
    }
    Ok(())
}

fn check_coupling_input(op: &'static str, x: &Tensor) -> Result<()> {
    if x.shape().channels != 4 {
        return Err(Error::shape(
            op,
            format!("expected the four maps stacked as 4 channels, got {}", x.shape()),
        ));
    }
    Ok(())
}

/// Stable coupling on the four maps stacked as channels of `x`.
pub fn coupling_forward(x: &Tensor, nets: &[CouplingNet; 4]) -> Result<Tensor> {
    check_coupling_input("coupling_forward", x)?;
    let frozen = nets.each_ref().map(CouplingNet::frozen::<f64>);
    let mut data = x.data().to_vec();
    coupling_forward_in_place(&mut data, x.shape(), &frozen)?;
    Tensor::from_vec(x.shape(), data)
}

pub fn coupling_inverse(y: &Tensor, nets: &[CouplingNet; 4]) -> Result<Tensor> {
    check_coupling_input("coupling_inverse", y)?;
    let frozen = nets.each_ref().map(CouplingNet::frozen::<f64>);
    let mut data = y.data().to_vec();
    coupling_inverse_in_place(&mut data, y.shape(), &frozen)?;
    Tensor::from_vec(y.shape(), data)
}

/// Coupling on the tape; `x` is `(N,4,h,w)`.
pub fn coupling_forward_tape(tape: &mut Tape, x: Var, nets: &[NetVars; 4]) -> Result<Var> {
    let mut ch: Vec<Var> = (0..4)
        .map(|i| tape.slice_channels(x, i, 1))
        .collect::<Result<_>>()?;
    for i in 0..4 {
        let [a, b, c] = CONDITION[i];
        let cond = tape.concat(&[ch[a], ch[b], ch[c]])?;
        let f = CouplingNet::forward_tape(tape, &nets[i], cond)?;
        ch[i] = tape.add(ch[i], f)?;
    }
    tape.concat(&ch)
}
