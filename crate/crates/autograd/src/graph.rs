use std::borrow::Cow;

use crate::conv::{
    col2im, conv2d_direct, conv2d_direct_weight_grad, conv_output_size, conv_transpose_output_size,
    im2col, DIRECT_MAX_OUT,
};
use crate::error::{Result, TensorError};
use crate::scalar::{matmul, Scalar};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
        cols: Vec<T>,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    },
    ReflectPad {
        x: Var,
        pad: usize,
    },
    InstanceNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Relu(Var),
    LeakyRelu(Var, T),
    Tanh(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Abs(Var),
    Square(Var),
    Mean(Var),
    Concat(Vec<Var>),
    SliceChannels {
        x: Var,
        start: usize,
    },
}

#[derive(Debug)]
struct Node<'a, T: Scalar> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// A single-use computation tape.
///
/// Parameters can be borrowed into the graph (`param`) so that the same
/// weights feed any number of forward passes; every use accumulates into
/// the one gradient slot of that leaf.
#[derive(Debug)]
pub struct Graph<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
    recording: bool,
}

impl<'a, T: Scalar> Default for Graph<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar> Graph<'a, T> {
    /// Graph that records what backward needs.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// Forward-only graph; skips the column buffers kept for backward.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad: requires_grad && self.recording,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_owned(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Cow::Owned(value), op, rg)
    }

    /// Owned input that does not receive gradients.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    /// Borrowed constant, e.g. frozen weights another network is trained against.
    pub fn constant(&mut self, t: &'a Tensor<T>) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, false)
    }

    /// Borrowed trainable leaf.
    pub fn param(&mut self, t: &'a Tensor<T>) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, true)
    }

    /// Owned trainable leaf (used by gradient checks on loss inputs).
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    /// Zero-padded strided convolution. `x: [C, H, W]`, `w: [O, C, k, k]`, `b: [O]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        xv.expect_rank("conv2d", 3)?;
        wv.expect_rank("conv2d", 4)?;
        let (c, h, wd) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let (o, wc, k, k2) = (wv.shape()[0], wv.shape()[1], wv.shape()[2], wv.shape()[3]);
        if wc != c || k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: xv.shape().to_vec(),
                rhs: wv.shape().to_vec(),
            });
        }
        let oh = conv_output_size(h, k, stride, padding);
        let ow = conv_output_size(wd, k, stride, padding);
        let (oh, ow) = match (oh, ow) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(TensorError::InvalidArgument {
                    op: "conv2d",
                    reason: format!("kernel {k} does not fit input {h}x{wd} with padding {padding}"),
                })
            }
        };
        let plane = oh * ow;
        let (cols, mut out) = if stride == 1 && o <= DIRECT_MAX_OUT {
            let out = conv2d_direct(xv.data(), c, h, wd, wv.data(), o, k, padding, oh, ow);
            (Vec::new(), out)
        } else {
            let cols = im2col(xv.data(), c, h, wd, k, stride, padding, oh, ow);
            let mut out = vec![T::zero(); o * plane];
            matmul(o, c * k * k, plane, wv.data(), false, &cols, false, &mut out, false);
            (cols, out)
        };
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != [o] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d bias",
                    lhs: vec![o],
                    rhs: bv.shape().to_vec(),
                });
            }
            add_channel_bias(&mut out, bv.data(), plane);
        }
        let value = Tensor::new(vec![o, oh, ow], out)?;
        let cols = if self.recording { cols } else { Vec::new() };
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push_owned(
            value,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                padding,
                cols,
            },
            &inputs,
        ))
    }

    /// Transposed convolution. `x: [C, H, W]`, `w: [C, O, k, k]`, `b: [O]`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        xv.expect_rank("conv_transpose2d", 3)?;
        wv.expect_rank("conv_transpose2d", 4)?;
        let (c, h, wd) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let (wc, o, k, k2) = (wv.shape()[0], wv.shape()[1], wv.shape()[2], wv.shape()[3]);
        if wc != c || k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "conv_transpose2d",
                lhs: xv.shape().to_vec(),
                rhs: wv.shape().to_vec(),
            });
        }
        let oh = conv_transpose_output_size(h, k, stride, padding, output_padding);
        let ow = conv_transpose_output_size(wd, k, stride, padding, output_padding);
        let (oh, ow) = match (oh, ow) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(TensorError::InvalidArgument {
                    op: "conv_transpose2d",
                    reason: format!("invalid geometry for input {h}x{wd}"),
                })
            }
        };
        let okk = o * k * k;
        let mut cols = vec![T::zero(); okk * h * wd];
        matmul(okk, c, h * wd, wv.data(), true, xv.data(), false, &mut cols, false);
        let mut out = col2im(&cols, o, oh, ow, k, stride, padding, h, wd);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != [o] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv_transpose2d bias",
                    lhs: vec![o],
                    rhs: bv.shape().to_vec(),
                });
            }
            add_channel_bias(&mut out, bv.data(), oh * ow);
        }
        let value = Tensor::new(vec![o, oh, ow], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push_owned(
            value,
            Op::ConvTranspose2d {
                x,
                w,
                b,
                stride,
                padding,
            },
            &inputs,
        ))
    }

    /// Mirror padding without repeating the edge pixel.
    pub fn reflect_pad(&mut self, x: Var, pad: usize) -> Result<Var> {
        let xv = self.value(x);
        xv.expect_rank("reflect_pad", 3)?;
        let (c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        if pad >= h || pad >= w {
            return Err(TensorError::InvalidArgument {
                op: "reflect_pad",
                reason: format!("padding {pad} needs input larger than {h}x{w}"),
            });
        }
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        let mut out = vec![T::zero(); c * ph * pw];
        let src = xv.data();
        for ch in 0..c {
            for y in 0..ph {
                let sy = reflect_index(y, pad, h);
                for xx in 0..pw {
                    let sx = reflect_index(xx, pad, w);
                    out[(ch * ph + y) * pw + xx] = src[(ch * h + sy) * w + sx];
                }
            }
        }
        let value = Tensor::new(vec![c, ph, pw], out)?;
        Ok(self.push_owned(value, Op::ReflectPad { x, pad }, &[x]))
    }

    /// Per-channel normalization over the spatial extent with affine scale/offset.
    pub fn instance_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        xv.expect_rank("instance_norm", 3)?;
        let c = xv.shape()[0];
        let plane = xv.shape()[1] * xv.shape()[2];
        let g = self.value(gamma);
        let b = self.value(beta);
        if g.shape() != [c] || b.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "instance_norm",
                lhs: vec![c],
                rhs: g.shape().to_vec(),
            });
        }
        let n = T::from_f64(plane as f64);
        let eps = T::from_f64(eps);
        let mut xhat = vec![T::zero(); c * plane];
        let mut inv_std = vec![T::zero(); c];
        let mut out = vec![T::zero(); c * plane];
        for ch in 0..c {
            let src = &xv.data()[ch * plane..(ch + 1) * plane];
            let mean = src.iter().copied().sum::<T>() / n;
            let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std[ch] = inv;
            let (gc, bc) = (g.data()[ch], b.data()[ch]);
            for i in 0..plane {
                let xh = (src[i] - mean) * inv;
                xhat[ch * plane + i] = xh;
                out[ch * plane + i] = gc * xh + bc;
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        let (xhat, inv_std) = if self.recording {
            (xhat, inv_std)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(self.push_owned(
            value,
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.push_owned(value, Op::Relu(x), &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::from_f64(slope);
        let value = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { v * s });
        self.push_owned(value, Op::LeakyRelu(x, s), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.tanh());
        self.push_owned(value, Op::Tanh(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push_owned(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push_owned(value, Op::Sub(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = T::from_f64(c);
        let value = self.value(x).map(|v| v * c);
        self.push_owned(value, Op::Scale(x, c), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let c = T::from_f64(c);
        let value = self.value(x).map(|v| v + c);
        self.push_owned(value, Op::AddScalar(x), &[x])
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.abs());
        self.push_owned(value, Op::Abs(x), &[x])
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        self.push_owned(value, Op::Square(x), &[x])
    }

    /// Mean over all elements, producing a scalar.
    pub fn mean(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).mean());
        self.push_owned(value, Op::Mean(x), &[x])
    }

    /// Sum of scalars (or same-shaped tensors).
    pub fn sum_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) = terms.split_first().ok_or(TensorError::InvalidArgument {
            op: "sum_all",
            reason: "no terms".into(),
        })?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat_channels(&tensors)?;
        Ok(self.push_owned(value, Op::Concat(parts.to_vec()), parts))
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(x).slice_channels(start, len)?;
        Ok(self.push_owned(value, Op::SliceChannels { x, start }, &[x]))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if !self.recording {
            return Err(TensorError::NotRecording);
        }
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &gout, &mut grads)?;
            grads[idx] = Some(gout);
        }
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !matches!(n.op, Op::Leaf) {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(
        &self,
        node: &Node<'a, T>,
        gout: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let g = gout.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                padding,
                cols,
            } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (c, h, wd) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let (o, k) = (wv.shape()[0], wv.shape()[2]);
                let (oh, ow) = (gout.shape()[1], gout.shape()[2]);
                let plane = oh * ow;
                let ckk = c * k * k;
                if self.requires_grad(*w) {
                    // An empty column matrix marks the direct forward path.
                    let dw = if cols.is_empty() {
                        conv2d_direct_weight_grad(xv.data(), c, h, wd, g, o, k, *padding, oh, ow)
                    } else {
                        let mut dw = vec![T::zero(); o * ckk];
                        matmul(o, plane, ckk, g, false, cols, true, &mut dw, false);
                        dw
                    };
                    self.accumulate(grads, *w, dw);
                }
                if let Some(b) = b {
                    if self.requires_grad(*b) {
                        self.accumulate(grads, *b, channel_sums(g, o, plane));
                    }
                }
                if self.requires_grad(*x) {
                    let dx = if *stride == 1 && o < c && *padding < k {
                        // Cheaper as a full convolution of the output gradient
                        // with flipped weights when there are few output channels.
                        let flipped = flip_kernel(wv.data(), o, c, k);
                        let gcols = im2col(g, o, oh, ow, k, 1, k - 1 - padding, h, wd);
                        let mut dx = vec![T::zero(); c * h * wd];
                        matmul(c, o * k * k, h * wd, &flipped, false, &gcols, false, &mut dx, false);
                        dx
                    } else {
                        let mut dcols = vec![T::zero(); ckk * plane];
                        matmul(ckk, o, plane, wv.data(), true, g, false, &mut dcols, false);
                        col2im(&dcols, c, h, wd, k, *stride, *padding, oh, ow)
                    };
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::ConvTranspose2d {
                x,
                w,
                b,
                stride,
                padding,
            } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (c, h, wd) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let (o, k) = (wv.shape()[1], wv.shape()[2]);
                let (oh, ow) = (gout.shape()[1], gout.shape()[2]);
                let okk = o * k * k;
                if let Some(b) = b {
                    if self.requires_grad(*b) {
                        self.accumulate(grads, *b, channel_sums(g, o, oh * ow));
                    }
                }
                let need_w = self.requires_grad(*w);
                let need_x = self.requires_grad(*x);
                if need_w || need_x {
                    let dcols = im2col(g, o, oh, ow, k, *stride, *padding, h, wd);
                    if need_w {
                        let mut dw = vec![T::zero(); c * okk];
                        matmul(c, h * wd, okk, xv.data(), false, &dcols, true, &mut dw, false);
                        self.accumulate(grads, *w, dw);
                    }
                    if need_x {
                        let mut dx = vec![T::zero(); c * h * wd];
                        matmul(c, okk, h * wd, wv.data(), false, &dcols, false, &mut dx, false);
                        self.accumulate(grads, *x, dx);
                    }
                }
            }
            Op::ReflectPad { x, pad } => {
                let xs = self.value(*x).shape();
                let (c, h, w) = (xs[0], xs[1], xs[2]);
                let (ph, pw) = (h + 2 * pad, w + 2 * pad);
                let mut dx = vec![T::zero(); c * h * w];
                for ch in 0..c {
                    for y in 0..ph {
                        let sy = reflect_index(y, *pad, h);
                        for xx in 0..pw {
                            let sx = reflect_index(xx, *pad, w);
                            let d = &mut dx[(ch * h + sy) * w + sx];
                            *d = *d + g[(ch * ph + y) * pw + xx];
                        }
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let xs = self.value(*x).shape();
                let c = xs[0];
                let plane = xs[1] * xs[2];
                let gv = self.value(*gamma).data();
                let n = T::from_f64(plane as f64);
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                let mut dx = vec![T::zero(); c * plane];
                for ch in 0..c {
                    let gs = &g[ch * plane..(ch + 1) * plane];
                    let xh = &xhat[ch * plane..(ch + 1) * plane];
                    let sum_g: T = gs.iter().copied().sum();
                    let sum_gx: T = gs.iter().zip(xh).map(|(&a, &b)| a * b).sum();
                    dbeta[ch] = sum_g;
                    dgamma[ch] = sum_gx;
                    let scale = gv[ch] * inv_std[ch] / n;
                    for i in 0..plane {
                        dx[ch * plane + i] = scale * (n * gs[i] - sum_g - xh[i] * sum_gx);
                    }
                }
                if self.requires_grad(*x) {
                    self.accumulate(grads, *x, dx);
                }
                if self.requires_grad(*gamma) {
                    self.accumulate(grads, *gamma, dgamma);
                }
                if self.requires_grad(*beta) {
                    self.accumulate(grads, *beta, dbeta);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let dx = g
                    .iter()
                    .zip(xv)
                    .map(|(&gi, &xi)| if xi > T::zero() { gi } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, dx);
            }
            Op::LeakyRelu(x, s) => {
                let xv = self.value(*x).data();
                let dx = g
                    .iter()
                    .zip(xv)
                    .map(|(&gi, &xi)| if xi > T::zero() { gi } else { gi * *s })
                    .collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                let dx = g
                    .iter()
                    .zip(y)
                    .map(|(&gi, &yi)| gi * (T::one() - yi * yi))
                    .collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.iter().map(|&v| -v).collect());
            }
            Op::Scale(x, c) => {
                self.accumulate(grads, *x, g.iter().map(|&v| v * *c).collect());
            }
            Op::AddScalar(x) => {
                self.accumulate(grads, *x, g.to_vec());
            }
            Op::Abs(x) => {
                let xv = self.value(*x).data();
                let dx = g
                    .iter()
                    .zip(xv)
                    .map(|(&gi, &xi)| gi * sign(xi))
                    .collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Square(x) => {
                let xv = self.value(*x).data();
                let two = T::from_f64(2.0);
                let dx = g.iter().zip(xv).map(|(&gi, &xi)| two * gi * xi).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Mean(x) => {
                let n = self.value(*x).numel();
                let v = g[0] / T::from_f64(n as f64);
                self.accumulate(grads, *x, vec![v; n]);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    self.accumulate(grads, p, g[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::SliceChannels { x, start } => {
                let xv = self.value(*x);
                let plane = xv.shape()[1] * xv.shape()[2];
                let mut dx = vec![T::zero(); xv.numel()];
                dx[start * plane..start * plane + g.len()].copy_from_slice(g);
                self.accumulate(grads, *x, dx);
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, data: Vec<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (a, b) in existing.data_mut().iter_mut().zip(data) {
                    *a = *a + b;
                }
            }
            slot @ None => {
                let shape = self.nodes[v.0].value.shape().to_vec();
                *slot = Some(Tensor::new(shape, data).expect("gradient matches value shape"));
            }
        }
    }
}

/// Gradients of leaf nodes after a backward sweep.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros shaped like `like` when no path reached it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor<T>) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn reflect_index(i: usize, pad: usize, n: usize) -> usize {
    let j = i as isize - pad as isize;
    let n = n as isize;
    let r = if j < 0 {
        -j
    } else if j >= n {
        2 * (n - 1) - j
    } else {
        j
    };
    r as usize
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (ch, &b) in bias.iter().enumerate() {
        for v in &mut out[ch * plane..(ch + 1) * plane] {
            *v = *v + b;
        }
    }
}

fn channel_sums<T: Scalar>(g: &[T], channels: usize, plane: usize) -> Vec<T> {
    (0..channels)
        .map(|ch| g[ch * plane..(ch + 1) * plane].iter().copied().sum())
        .collect()
}

/// `[O, C, k, k]` -> `[C, O, k, k]` with both spatial axes reversed.
fn flip_kernel<T: Scalar>(w: &[T], o: usize, c: usize, k: usize) -> Vec<T> {
    let kk = k * k;
    let mut out = vec![T::zero(); w.len()];
    for oi in 0..o {
        for ci in 0..c {
            let src = &w[(oi * c + ci) * kk..(oi * c + ci + 1) * kk];
            let dst = &mut out[(ci * o + oi) * kk..(ci * o + oi + 1) * kk];
            for (d, s) in dst.iter_mut().zip(src.iter().rev()) {
                *d = *s;
            }
        }
    }
    out
}
