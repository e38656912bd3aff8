use super::kernels::{self, ConvGeometry, MatRef};
use super::norm::{BatchNormState, NormMode};
use super::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::linalg::bilinear;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
        cols: Vec<Vec<f64>>,
    },
    LeakyRelu {
        input: Var,
        slope: f64,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Square(Var),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    ChannelMix {
        input: Var,
        matrix: Var,
    },
    Concat(Vec<Var>),
    Slice {
        input: Var,
        start: usize,
    },
    SpaceToDepth(Var),
    DepthToSpace(Var),
    SpectralNorm {
        weight: Var,
        u: Vec<f64>,
        v: Vec<f64>,
        sigma: f64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Reverse-mode autodiff tape.
///
/// Operations are appended in execution order; [`Tape::backward`] walks them
/// in exact reverse order. Only leaves created with [`Tape::param`] (and
/// values derived from them) carry gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input (no gradient).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf whose gradient is populated by `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of a leaf after `backward`; `None` for constants and
    /// unreachable leaves.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Copy of a value detached from the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let xs = self.value(input).shape();
        let ws = self.value(weight).shape();
        let geom = ConvGeometry::new(xs.dims(), ws.dims(), stride, pad)?;
        if let Some(b) = bias {
            let n = self.value(b).numel();
            if n != geom.out_channels {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias has {n} entries but out_channels = {}", geom.out_channels),
                ));
            }
        }
        let rg = self.rg(&[input, weight]) || bias.map_or(false, |b| self.requires_grad(b));
        let keep = self.requires_grad(weight);
        let (out, cols) = kernels::conv2d_forward(
            self.value(input).data(),
            xs.batch,
            &geom,
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            keep,
        );
        let shape = Shape::new(xs.batch, geom.out_channels, geom.out_h, geom.out_w);
        let value = Tensor::from_vec(shape, out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            },
            rg,
        ))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        let value = self.value(input).map(|x| kernels::leaky_relu(x, slope));
        let rg = self.rg(&[input]);
        self.push(value, Op::LeakyRelu { input, slope }, rg)
    }

    /// Per-channel batch normalization with learnable `gamma`/`beta`
    /// (each holding one entry per channel). Train mode updates `state`.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState,
        mode: NormMode,
    ) -> Result<Var> {
        let s = self.value(input).shape();
        let ch = s.channels;
        if state.channels() != ch
            || self.value(gamma).numel() != ch
            || self.value(beta).numel() != ch
        {
            return Err(Error::shape(
                "batch_norm",
                format!(
                    "input has {ch} channels, state {} / gamma {} / beta {}",
                    state.channels(),
                    self.value(gamma).numel(),
                    self.value(beta).numel()
                ),
            ));
        }
        let plane = s.plane();
        let count = s.batch * plane;
        let x = self.value(input).data();
        let (mean, var) = match mode {
            NormMode::Train => {
                let mut mean = vec![0.0; ch];
                let mut var = vec![0.0; ch];
                for c in 0..ch {
                    let mut acc = 0.0;
                    for n in 0..s.batch {
                        let o = (n * ch + c) * plane;
                        acc += x[o..o + plane].iter().sum::<f64>();
                    }
                    let m = acc / count as f64;
                    let mut v = 0.0;
                    for n in 0..s.batch {
                        let o = (n * ch + c) * plane;
                        v += x[o..o + plane].iter().map(|t| (t - m) * (t - m)).sum::<f64>();
                    }
                    mean[c] = m;
                    var[c] = v / count as f64;
                }
                (mean, var)
            }
            NormMode::Eval => (state.running_mean.clone(), state.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + state.eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for n in 0..s.batch {
            for c in 0..ch {
                let o = (n * ch + c) * plane;
                for i in o..o + plane {
                    xhat[i] = (x[i] - mean[c]) * inv_std[c];
                    out[i] = g[c] * xhat[i] + b[c];
                }
            }
        }
        if mode == NormMode::Train {
            state.update(&mean, &var, count);
        }
        let rg = self.rg(&[input, gamma, beta]);
        let value = Tensor::from_vec(s, out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                train: mode == NormMode::Train,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        let rg = self.rg(&[a]);
        self.push(value, Op::AddScalar(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let rg = self.rg(&[a]);
        self.push(value, Op::Square(a), rg)
    }

    /// Elementwise `|x|`; the subgradient at 0 is taken as 0.
    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::abs);
        let rg = self.rg(&[a]);
        self.push(value, Op::Abs(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).mean());
        let rg = self.rg(&[a]);
        self.push(value, Op::Mean(a), rg)
    }

    /// Per-pixel channel mixing: the channel vector at every position is
    /// right-multiplied by the `C x C` matrix (stored row-major, any 4-D
    /// shape with `C*C` entries).
    pub fn channel_mix(&mut self, input: Var, matrix: Var) -> Result<Var> {
        let s = self.value(input).shape();
        let c = s.channels;
        if self.value(matrix).numel() != c * c {
            return Err(Error::shape(
                "channel_mix",
                format!(
                    "input has {c} channels but matrix has {} entries",
                    self.value(matrix).numel()
                ),
            ));
        }
        let out = mix_channels(self.value(input).data(), s, self.value(matrix).data());
        let rg = self.rg(&[input, matrix]);
        let value = Tensor::from_vec(s, out)?;
        Ok(self.push(value, Op::ChannelMix { input, matrix }, rg))
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(parts[0]).shape();
        let mut channels = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.batch != first.batch || s.height != first.height || s.width != first.width {
                return Err(Error::shape("concat", format!("{first} vs {s}")));
            }
            channels += s.channels;
        }
        let shape = Shape::new(first.batch, channels, first.height, first.width);
        let plane = first.plane();
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..first.batch {
            for &p in parts {
                let t = self.value(p);
                let per = t.shape().channels * plane;
                data.extend_from_slice(&t.data()[n * per..(n + 1) * per]);
            }
        }
        let rg = self.rg(parts);
        let value = Tensor::from_vec(shape, data)?;
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    /// Channels `start..start+len`.
    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.value(input).shape();
        if start + len > s.channels || len == 0 {
            return Err(Error::shape(
                "slice_channels",
                format!("range {start}..{} out of {} channels", start + len, s.channels),
            ));
        }
        let plane = s.plane();
        let shape = Shape::new(s.batch, len, s.height, s.width);
        let x = self.value(input).data();
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..s.batch {
            let o = (n * s.channels + start) * plane;
            data.extend_from_slice(&x[o..o + len * plane]);
        }
        let rg = self.rg(&[input]);
        let value = Tensor::from_vec(shape, data)?;
        Ok(self.push(value, Op::Slice { input, start }, rg))
    }

    pub fn space_to_depth(&mut self, input: Var) -> Result<Var> {
        let value = space_to_depth(self.value(input))?;
        let rg = self.rg(&[input]);
        Ok(self.push(value, Op::SpaceToDepth(input), rg))
    }

    pub fn depth_to_space(&mut self, input: Var) -> Result<Var> {
        let value = depth_to_space(self.value(input))?;
        let rg = self.rg(&[input]);
        Ok(self.push(value, Op::DepthToSpace(input), rg))
    }

    /// `W / sigma` with `sigma = u^T W v` for the weight viewed as an
    /// `(out, rest)` matrix. `u` and `v` are treated as constants.
    pub fn spectral_norm(&mut self, weight: Var, u: &[f64], v: &[f64]) -> Result<Var> {
        let w = self.value(weight);
        let rows = w.shape().batch;
        let cols = w.numel() / rows.max(1);
        if u.len() != rows || v.len() != cols {
            return Err(Error::shape(
                "spectral_norm",
                format!(
                    "weight is {rows}x{cols}, vectors are {} and {}",
                    u.len(),
                    v.len()
                ),
            ));
        }
        let sigma = bilinear(u, w.data(), v);
        let value = w.scale(1.0 / sigma);
        let rg = self.rg(&[weight]);
        Ok(self.push(
            value,
            Op::SpectralNorm {
                weight,
                u: u.to_vec(),
                v: v.to_vec(),
                sigma,
            },
            rg,
        ))
    }

    /// Populates gradients of every trainable leaf reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got {}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                match &mut self.nodes[i].grad {
                    Some(g) => g.data_mut().iter_mut().zip(dy.data()).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(dy),
                }
                continue;
            }
            self.propagate(i, &dy, &mut grads)?;
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, contrib: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g
                .data_mut()
                .iter_mut()
                .zip(contrib.data())
                .for_each(|(a, b)| *a += b),
            slot => *slot = Some(contrib),
        }
    }

    fn propagate(&self, i: usize, dy: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let mut dx = self
                    .requires_grad(*input)
                    .then(|| Tensor::zeros(x.shape()));
                let mut dw = self
                    .requires_grad(*weight)
                    .then(|| Tensor::zeros(w.shape()));
                let mut db = bias
                    .filter(|b| self.requires_grad(*b))
                    .map(|b| Tensor::zeros(self.value(b).shape()));
                kernels::conv2d_backward(
                    x.data(),
                    cols,
                    x.shape().batch,
                    geom,
                    w.data(),
                    dy.data(),
                    dx.as_mut().map(|t| t.data_mut()),
                    dw.as_mut().map(|t| t.data_mut()),
                    db.as_mut().map(|t| t.data_mut()),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *input, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *weight, dw);
                }
                if let (Some(db), Some(b)) = (db, bias) {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input);
                let dx = x.zip_map(dy, |x, g| if x >= 0.0 { g } else { g * slope })?;
                self.accumulate(grads, *input, dx);
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let s = dy.shape();
                let ch = s.channels;
                let plane = s.plane();
                let count = (s.batch * plane) as f64;
                let g = self.value(*gamma).data();
                let d = dy.data();
                let mut sum_dy = vec![0.0; ch];
                let mut sum_dy_xhat = vec![0.0; ch];
                for n in 0..s.batch {
                    for c in 0..ch {
                        let o = (n * ch + c) * plane;
                        for j in o..o + plane {
                            sum_dy[c] += d[j];
                            sum_dy_xhat[c] += d[j] * xhat[j];
                        }
                    }
                }
                if self.requires_grad(*input) {
                    let mut dx = vec![0.0; d.len()];
                    for n in 0..s.batch {
                        for c in 0..ch {
                            let o = (n * ch + c) * plane;
                            let k = g[c] * inv_std[c];
                            for j in o..o + plane {
                                dx[j] = if *train {
                                    k * (d[j] - sum_dy[c] / count - xhat[j] * sum_dy_xhat[c] / count)
                                } else {
                                    k * d[j]
                                };
                            }
                        }
                    }
                    self.accumulate(grads, *input, Tensor::from_vec(s, dx)?);
                }
                let gs = self.value(*gamma).shape();
                self.accumulate(grads, *gamma, Tensor::from_vec(gs, sum_dy_xhat)?);
                let bs = self.value(*beta).shape();
                self.accumulate(grads, *beta, Tensor::from_vec(bs, sum_dy)?);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, dy.clone());
                self.accumulate(grads, *b, dy.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, dy.clone());
                self.accumulate(grads, *b, dy.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, dy.zip_map(self.value(*b), |g, y| g * y)?);
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, dy.zip_map(self.value(*a), |g, x| g * x)?);
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, dy.scale(*s)),
            Op::AddScalar(a) => self.accumulate(grads, *a, dy.clone()),
            Op::Square(a) => {
                let dx = self.value(*a).zip_map(dy, |x, g| 2.0 * x * g)?;
                self.accumulate(grads, *a, dx);
            }
            Op::Abs(a) => {
                let dx = self.value(*a).zip_map(dy, |x, g| {
                    if x > 0.0 {
                        g
                    } else if x < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                })?;
                self.accumulate(grads, *a, dx);
            }
            Op::Sum(a) => {
                let g = dy.item()?;
                self.accumulate(grads, *a, Tensor::full(self.value(*a).shape(), g));
            }
            Op::Mean(a) => {
                let x = self.value(*a);
                let g = dy.item()? / x.numel() as f64;
                self.accumulate(grads, *a, Tensor::full(x.shape(), g));
            }
            Op::ChannelMix { input, matrix } => {
                let x = self.value(*input);
                let m = self.value(*matrix);
                let s = x.shape();
                let c = s.channels;
                let p = s.plane();
                if self.requires_grad(*input) {
                    // dX = M dY per sample
                    let mut dx = vec![0.0; x.numel()];
                    for n in 0..s.batch {
                        let o = n * c * p;
                        kernels::gemm(
                            MatRef::new(m.data(), c, c),
                            MatRef::new(&dy.data()[o..o + c * p], c, p),
                            0.0,
                            &mut dx[o..o + c * p],
                        );
                    }
                    self.accumulate(grads, *input, Tensor::from_vec(s, dx)?);
                }
                if self.requires_grad(*matrix) {
                    // dM = X dY^T summed over the batch
                    let mut dm = vec![0.0; c * c];
                    for n in 0..s.batch {
                        let o = n * c * p;
                        kernels::gemm(
                            MatRef::new(&x.data()[o..o + c * p], c, p),
                            MatRef::t(&dy.data()[o..o + c * p], c, p),
                            1.0,
                            &mut dm,
                        );
                    }
                    self.accumulate(grads, *matrix, Tensor::from_vec(m.shape(), dm)?);
                }
            }
            Op::Concat(parts) => {
                let s = dy.shape();
                let plane = s.plane();
                let mut offset = 0;
                for &part in parts {
                    let ps = self.value(part).shape();
                    if self.requires_grad(part) {
                        let mut data = Vec::with_capacity(ps.numel());
                        for n in 0..s.batch {
                            let o = (n * s.channels + offset) * plane;
                            data.extend_from_slice(&dy.data()[o..o + ps.channels * plane]);
                        }
                        self.accumulate(grads, part, Tensor::from_vec(ps, data)?);
                    }
                    offset += ps.channels;
                }
            }
            Op::Slice { input, start } => {
                let xs = self.value(*input).shape();
                let s = dy.shape();
                let plane = s.plane();
                let mut dx = Tensor::zeros(xs);
                for n in 0..s.batch {
                    let src = &dy.data()[n * s.channels * plane..(n + 1) * s.channels * plane];
                    let o = (n * xs.channels + start) * plane;
                    dx.data_mut()[o..o + s.channels * plane].copy_from_slice(src);
                }
                self.accumulate(grads, *input, dx);
            }
            Op::SpaceToDepth(a) => self.accumulate(grads, *a, depth_to_space(dy)?),
            Op::DepthToSpace(a) => self.accumulate(grads, *a, space_to_depth(dy)?),
            Op::SpectralNorm {
                weight,
                u,
                v,
                sigma,
            } => {
                let w = self.value(*weight);
                let inner: f64 = dy.data().iter().zip(w.data()).map(|(g, w)| g * w).sum();
                let coef = inner / (sigma * sigma);
                let cols = v.len();
                let mut dw = dy.scale(1.0 / sigma);
                for (idx, d) in dw.data_mut().iter_mut().enumerate() {
                    *d -= coef * u[idx / cols] * v[idx % cols];
                }
                self.accumulate(grads, *weight, dw);
            }
        }
        Ok(())
    }
}

/// Per-pixel `x_row * M` for a batch laid out `(n, c, plane)`.
pub(crate) fn mix_channels<T: super::Real>(x: &[T], s: Shape, m: &[T]) -> Vec<T> {
    let c = s.channels;
    let p = s.plane();
    let mut out = vec![T::zero(); x.len()];
    for n in 0..s.batch {
        let o = n * c * p;
        // Y = M^T X
        kernels::gemm(
            MatRef::t(m, c, c),
            MatRef::new(&x[o..o + c * p], c, p),
            T::zero(),
            &mut out[o..o + c * p],
        );
    }
    out
}

/// `(n, c, h, w) -> (n, 4c, h/2, w/2)`; output channel `4c + k` holds the
/// `k`-th pixel of each 2x2 cell in order top-left, top-right, bottom-left,
/// bottom-right.
pub fn space_to_depth(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.height % 2 != 0 || s.width % 2 != 0 {
        return Err(Error::shape(
            "squeeze",
            format!("height and width must be even, got {}x{}", s.height, s.width),
        ));
    }
    let out_shape = Shape::new(s.batch, 4 * s.channels, s.height / 2, s.width / 2);
    let mut out = Tensor::zeros(out_shape);
    space_to_depth_into(x.data(), s, out.data_mut());
    Ok(out)
}

pub(crate) fn space_to_depth_into<T: Copy>(x: &[T], s: Shape, out: &mut [T]) {
    let (h2, w2) = (s.height / 2, s.width / 2);
    let mut i = 0;
    for n in 0..s.batch {
        for c in 0..s.channels {
            let base = (n * s.channels + c) * s.plane();
            for k in 0..4 {
                let (dy, dx) = (k / 2, k % 2);
                for y in 0..h2 {
                    let row = base + (2 * y + dy) * s.width;
                    for xx in 0..w2 {
                        out[i] = x[row + 2 * xx + dx];
                        i += 1;
                    }
                }
            }
        }
    }
}

/// Inverse of [`space_to_depth`].
pub fn depth_to_space(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.channels % 4 != 0 {
        return Err(Error::shape(
            "unsqueeze",
            format!("channel count must be a multiple of 4, got {}", s.channels),
        ));
    }
    let out_shape = Shape::new(s.batch, s.channels / 4, s.height * 2, s.width * 2);
    let mut out = Tensor::zeros(out_shape);
    depth_to_space_into(x.data(), out_shape, out.data_mut());
    Ok(out)
}

/// `out_shape` is the unsqueezed shape.
pub(crate) fn depth_to_space_into<T: Copy>(x: &[T], out_shape: Shape, out: &mut [T]) {
    let s = out_shape;
    let (h2, w2) = (s.height / 2, s.width / 2);
    let mut i = 0;
    for n in 0..s.batch {
        for c in 0..s.channels {
            let base = (n * s.channels + c) * s.plane();
            for k in 0..4 {
                let (dy, dx) = (k / 2, k % 2);
                for y in 0..h2 {
                    let row = base + (2 * y + dy) * s.width;
                    for xx in 0..w2 {
                        out[row + 2 * xx + dx] = x[i];
                        i += 1;
                    }
                }
            }
        }
    }
}
