//! Reverse-mode differentiation over a linear record of tensor primitives.
//!
//! Nodes are appended in evaluation order, so every input id is smaller than
//! the id of the node consuming it and the backward sweep is a single pass
//! over the records in reverse.

use super::conv::{self, ChannelsLast, ConvGeometry};
use super::spectral::{self, SPECTRAL_EPS};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        input: Var,
        kernel: Var,
        geom: ConvGeometry,
    },
    AddChannelBias {
        input: Var,
        bias: Var,
    },
    ConvChannelsLast {
        input: Var,
        kernel: Var,
        geom: ChannelsLast,
    },
    AddLastBias {
        input: Var,
        bias: Var,
    },
    Add(Var, Var),
    Affine {
        input: Var,
        scale: f64,
    },
    Reshape(Var),
    TransposeLast2(Var),
    Downsample {
        input: Var,
        step: usize,
        phases: Vec<usize>,
    },
    Softmax(Var),
    LeakyRelu {
        input: Var,
        slope: f64,
    },
    Sigmoid(Var),
    Log(Var),
    Clamp {
        input: Var,
        lo: f64,
        hi: f64,
    },
    Square(Var),
    Sum(Var),
    Mean(Var),
    Dot {
        input: Var,
        weights: Tensor,
    },
    Narrow {
        input: Var,
        start: usize,
    },
    Concat(Vec<Var>),
    SpectralNorm {
        weight: Var,
        u: Tensor,
        v: Tensor,
        sigma: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that requires one.
///
/// Leaves that require a gradient but have no path to the loss get zeros.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn outer_rows(shape: &[usize]) -> usize {
    shape[..shape.len() - 1].iter().product()
}

fn last(shape: &[usize]) -> usize {
    *shape.last().expect("tensor has at least one axis")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// A gradient-free copy of `v`.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs(v)
    }

    fn unary(&mut self, input: Var, value: Tensor, op: Op) -> Var {
        let rg = self.needs(input);
        self.push(value, op, rg)
    }

    /// Zero-padded 1D cross-correlation of `[batch, ch, len]` with `[out, ch, k]`.
    pub fn conv1d(&mut self, input: Var, kernel: Var, padding: usize) -> Result<Var> {
        let geom = ConvGeometry::new(self.value(input).shape(), self.value(kernel).shape(), padding)?;
        let value = conv::conv1d_forward(self.value(input).data(), self.value(kernel).data(), &geom);
        let rg = self.needs(input) || self.needs(kernel);
        Ok(self.push(value, Op::Conv1d { input, kernel, geom }, rg))
    }

    /// Valid (unpadded) cross-correlation.
    pub fn conv1d_valid(&mut self, input: Var, kernel: Var) -> Result<Var> {
        self.conv1d(input, kernel, 0)
    }

    /// Adds a per-channel bias `[ch]` to a `[batch, ch, len]` tensor.
    pub fn add_channel_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let x = self.value(input);
        let b = self.value(bias);
        if x.shape().len() != 3 || b.len() != x.shape()[1] {
            return Err(Error::dim(
                "add_channel_bias",
                format!("bias of length {} for input {:?}", b.len(), x.shape()),
            ));
        }
        let (ch, len) = (x.shape()[1], x.shape()[2]);
        let mut out = x.clone();
        for (i, val) in out.data_mut().iter_mut().enumerate() {
            *val += b.data()[(i / len) % ch];
        }
        let rg = self.needs(input) || self.needs(bias);
        Ok(self.push(out, Op::AddChannelBias { input, bias }, rg))
    }

    /// Valid cross-correlation of a channels-last `[batch, len, ch]` input
    /// with an `[out, ch, k]` kernel, giving `[batch, len - k + 1, out]`.
    pub fn conv1d_channels_last(&mut self, input: Var, kernel: Var) -> Result<Var> {
        let geom = ChannelsLast::new(self.value(input).shape(), self.value(kernel).shape())?;
        let value = conv::channels_last_forward(self.value(input).data(), self.value(kernel).data(), &geom);
        let rg = self.needs(input) || self.needs(kernel);
        Ok(self.push(value, Op::ConvChannelsLast { input, kernel, geom }, rg))
    }

    /// Adds a bias `[n]` along the last axis, which must have length `n`.
    pub fn add_last_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let x = self.value(input);
        let b = self.value(bias);
        if b.len() != last(x.shape()) {
            return Err(Error::dim(
                "add_last_bias",
                format!("bias of length {} for input {:?}", b.len(), x.shape()),
            ));
        }
        let mut out = x.clone();
        for row in out.data_mut().chunks_exact_mut(b.len()) {
            row.iter_mut().zip(b.data()).for_each(|(v, bi)| *v += bi);
        }
        let rg = self.needs(input) || self.needs(bias);
        Ok(self.push(out, Op::AddLastBias { input, bias }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::dim("add", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let value = Tensor::from_parts(x.shape().to_vec(), data);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, input: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(input).map(|x| scale * x + shift);
        self.unary(input, value, Op::Affine { input, scale })
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).reshape(shape)?;
        Ok(self.unary(input, value, Op::Reshape(input)))
    }

    /// Swaps the two trailing axes.
    pub fn transpose_last2(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let s = x.shape();
        if s.len() < 2 {
            return Err(Error::dim("transpose", format!("need at least 2 axes, got {s:?}")));
        }
        let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
        let mut shape = s.to_vec();
        let n = shape.len();
        shape.swap(n - 2, n - 1);
        let value = Tensor::from_parts(shape, transpose_blocks(x.data(), r, c));
        Ok(self.unary(input, value, Op::TransposeLast2(input)))
    }

    /// `out[..., i] = x[..., phase + i·step]` along the last axis.
    pub fn downsample(&mut self, input: Var, step: usize, phase: usize) -> Result<Var> {
        self.downsample_rows(input, step, &[phase])
    }

    /// Downsampling with an individual phase per leading index of the
    /// first axis. `phases` has one entry, or one per slice of axis 0.
    pub fn downsample_rows(&mut self, input: Var, step: usize, phases: &[usize]) -> Result<Var> {
        let x = self.value(input);
        let value = downsample_values(x, step, phases)?;
        let phases = phases.to_vec();
        Ok(self.unary(input, value, Op::Downsample { input, step, phases }))
    }

    /// Softmax over the last axis, max-shifted for stability.
    pub fn softmax(&mut self, input: Var) -> Var {
        let value = softmax_values(self.value(input));
        self.unary(input, value, Op::Softmax(input))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        let value = self.value(input).map(|x| if x >= 0.0 { x } else { slope * x });
        self.unary(input, value, Op::LeakyRelu { input, slope })
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let value = self.value(input).map(sigmoid);
        self.unary(input, value, Op::Sigmoid(input))
    }

    pub fn log(&mut self, input: Var) -> Var {
        let value = self.value(input).map(f64::ln);
        self.unary(input, value, Op::Log(input))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, input: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(input).map(|x| x.clamp(lo, hi));
        self.unary(input, value, Op::Clamp { input, lo, hi })
    }

    pub fn square(&mut self, input: Var) -> Var {
        let value = self.value(input).map(|x| x * x);
        self.unary(input, value, Op::Square(input))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let value = Tensor::scalar(self.value(input).sum());
        self.unary(input, value, Op::Sum(input))
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let value = Tensor::scalar(x.sum() / x.len() as f64);
        self.unary(input, value, Op::Mean(input))
    }

    /// Inner product with a constant weight vector, `Σ w_i x_i`.
    pub fn dot_const(&mut self, input: Var, weights: Tensor) -> Result<Var> {
        let x = self.value(input);
        if x.len() != weights.len() {
            return Err(Error::dim(
                "dot",
                format!("{} values against {} weights", x.len(), weights.len()),
            ));
        }
        let value = Tensor::scalar(x.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum());
        Ok(self.unary(input, value, Op::Dot { input, weights }))
    }

    /// Rows `start..start + len` of the first axis.
    pub fn narrow(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(input);
        let s = x.shape();
        if len == 0 || start + len > s[0] {
            return Err(Error::dim(
                "narrow",
                format!("range {start}..{} outside axis of length {}", start + len, s[0]),
            ));
        }
        let inner = x.len() / s[0];
        let mut shape = s.to_vec();
        shape[0] = len;
        let value = Tensor::from_parts(shape, x.data()[start * inner..(start + len) * inner].to_vec());
        Ok(self.unary(input, value, Op::Narrow { input, start }))
    }

    /// Concatenation along the first axis.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Argument("concat of zero tensors".into()))?;
        let tail = self.value(*first).shape()[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for &v in inputs {
            let x = self.value(v);
            if x.shape()[1..] != tail[..] {
                return Err(Error::dim("concat", format!("{:?} vs trailing {tail:?}", x.shape())));
            }
            rows += x.shape()[0];
            data.extend_from_slice(x.data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        let rg = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(Tensor::from_parts(shape, data), Op::Concat(inputs.to_vec()), rg))
    }

    /// Spectrally normalized view of `weight`; returns the updated `u`.
    ///
    /// Gradients flow through the division by sigma with `u` and `v` held
    /// constant.
    pub fn spectral_normalize(&mut self, weight: Var, u: &Tensor, power_iters: usize) -> Result<(Var, Tensor)> {
        let sn = spectral::spectral_normalize(self.value(weight), u, power_iters)?;
        let new_u = sn.u.clone();
        let op = Op::SpectralNorm {
            weight,
            u: sn.u,
            v: sn.v,
            sigma: sn.sigma,
        };
        Ok((self.unary(weight, sn.weight, op), new_u))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        for (id, node) in self.nodes.iter().enumerate() {
            let keep = node.requires_grad && matches!(node.op, Op::Leaf);
            if !keep {
                grads[id] = None;
            } else if grads[id].is_none() {
                grads[id] = Some(Tensor::zeros_like(&node.value));
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, delta: Tensor| {
            if !self.needs(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.axpy(1.0, &delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d { input, kernel, geom } => {
                if self.needs(*input) {
                    acc(
                        *input,
                        conv::conv1d_grad_input(g.data(), self.value(*kernel).data(), geom),
                    );
                }
                if self.needs(*kernel) {
                    acc(
                        *kernel,
                        conv::conv1d_grad_kernel(g.data(), self.value(*input).data(), geom),
                    );
                }
            }
            Op::AddChannelBias { input, bias } => {
                if self.needs(*bias) {
                    let s = g.shape();
                    let (ch, len) = (s[1], s[2]);
                    let mut db = vec![0.0; ch];
                    for (i, v) in g.data().iter().enumerate() {
                        db[(i / len) % ch] += v;
                    }
                    acc(*bias, Tensor::from_vec(db));
                }
                acc(*input, g.clone());
            }
            Op::ConvChannelsLast { input, kernel, geom } => {
                if self.needs(*input) {
                    acc(
                        *input,
                        conv::channels_last_grad_input(g.data(), self.value(*kernel).data(), geom),
                    );
                }
                if self.needs(*kernel) {
                    acc(
                        *kernel,
                        conv::channels_last_grad_kernel(g.data(), self.value(*input).data(), geom),
                    );
                }
            }
            Op::AddLastBias { input, bias } => {
                if self.needs(*bias) {
                    let n = self.value(*bias).len();
                    let mut db = vec![0.0; n];
                    for row in g.data().chunks_exact(n) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                    acc(*bias, Tensor::from_vec(db));
                }
                acc(*input, g.clone());
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Affine { input, scale } => acc(*input, g.map(|x| scale * x)),
            Op::Reshape(input) => {
                let shape = self.value(*input).shape().to_vec();
                acc(*input, Tensor::from_parts(shape, g.data().to_vec()));
            }
            Op::TransposeLast2(input) => {
                let s = g.shape();
                let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
                let shape = self.value(*input).shape().to_vec();
                acc(*input, Tensor::from_parts(shape, transpose_blocks(g.data(), r, c)));
            }
            Op::Downsample { input, step, phases } => {
                let x = self.value(*input);
                let (len, out_len) = (last(x.shape()), last(g.shape()));
                let per_phase = outer_rows(x.shape()) / phases.len();
                let mut dx = vec![0.0; x.len()];
                for row in 0..outer_rows(x.shape()) {
                    let phase = phases[row / per_phase];
                    for i in 0..out_len {
                        dx[row * len + phase + i * step] += g.data()[row * out_len + i];
                    }
                }
                acc(*input, Tensor::from_parts(x.shape().to_vec(), dx));
            }
            Op::Softmax(input) => {
                let len = last(y.shape());
                let mut dx = vec![0.0; y.len()];
                for ((dxr, yr), gr) in dx.chunks_mut(len).zip(y.data().chunks(len)).zip(g.data().chunks(len)) {
                    let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, &yi), &gi) in dxr.iter_mut().zip(yr).zip(gr) {
                        *d = yi * (gi - inner);
                    }
                }
                acc(*input, Tensor::from_parts(y.shape().to_vec(), dx));
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input);
                acc(*input, zip(x, g, |xi, gi| if xi >= 0.0 { gi } else { slope * gi }));
            }
            Op::Sigmoid(input) => acc(*input, zip(y, g, |yi, gi| gi * yi * (1.0 - yi))),
            Op::Log(input) => acc(*input, zip(self.value(*input), g, |xi, gi| gi / xi)),
            Op::Clamp { input, lo, hi } => {
                let x = self.value(*input);
                acc(
                    *input,
                    zip(x, g, |xi, gi| if xi >= *lo && xi <= *hi { gi } else { 0.0 }),
                );
            }
            Op::Square(input) => acc(*input, zip(self.value(*input), g, |xi, gi| 2.0 * xi * gi)),
            Op::Sum(input) => {
                acc(*input, Tensor::full(self.value(*input).shape(), g.item()));
            }
            Op::Mean(input) => {
                let x = self.value(*input);
                acc(*input, Tensor::full(x.shape(), g.item() / x.len() as f64));
            }
            Op::Dot { input, weights } => {
                let shape = self.value(*input).shape().to_vec();
                let gi = g.item();
                acc(
                    *input,
                    Tensor::from_parts(shape, weights.data().iter().map(|w| w * gi).collect()),
                );
            }
            Op::Narrow { input, start } => {
                let x = self.value(*input);
                let inner = x.len() / x.shape()[0];
                let mut dx = vec![0.0; x.len()];
                dx[start * inner..start * inner + g.len()].copy_from_slice(g.data());
                acc(*input, Tensor::from_parts(x.shape().to_vec(), dx));
            }
            Op::Concat(inputs) => {
                let mut offset = 0;
                for &v in inputs {
                    let x = self.value(v);
                    let part = g.data()[offset..offset + x.len()].to_vec();
                    offset += x.len();
                    acc(v, Tensor::from_parts(x.shape().to_vec(), part));
                }
            }
            Op::SpectralNorm { weight, u, v, sigma } => {
                // dL/dW = (G - <G, W/σ> u vᵀ) / σ
                let inner: f64 = g.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
                let cols = v.len();
                let mut dw = g.data().to_vec();
                for (idx, d) in dw.iter_mut().enumerate() {
                    let (r, c) = (idx / cols, idx % cols);
                    *d = (*d - inner * u.data()[r] * v.data()[c]) / sigma.max(SPECTRAL_EPS);
                }
                acc(*weight, Tensor::from_parts(g.shape().to_vec(), dw));
            }
        }
    }
}

fn zip(x: &Tensor, g: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = x.data().iter().zip(g.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn transpose_blocks(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let block = rows * cols;
    let mut out = vec![0.0; data.len()];
    for (src, dst) in data.chunks(block).zip(out.chunks_mut(block)) {
        for r in 0..rows {
            for c in 0..cols {
                dst[c * rows + r] = src[r * cols + c];
            }
        }
    }
    out
}

pub(crate) fn softmax_values(x: &Tensor) -> Tensor {
    let len = last(x.shape());
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(len) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

pub(crate) fn downsample_values(x: &Tensor, step: usize, phases: &[usize]) -> Result<Tensor> {
    if step == 0 {
        return Err(Error::Argument("downsample step must be at least 1".into()));
    }
    let rows = outer_rows(x.shape());
    let lead = x.shape()[0];
    if phases.is_empty() || (phases.len() != 1 && phases.len() != lead) {
        return Err(Error::Argument(format!(
            "{} phases for a leading axis of {lead}",
            phases.len()
        )));
    }
    let len = last(x.shape());
    if let Some(&bad) = phases.iter().find(|&&p| p >= step || p >= len) {
        return Err(Error::Argument(format!(
            "downsample phase {bad} must be below step {step} and length {len}"
        )));
    }
    // every phase must give the same output length
    let out_len = (len - phases[0]).div_ceil(step);
    if phases.iter().any(|&p| (len - p).div_ceil(step) != out_len) {
        return Err(Error::Argument(format!(
            "phases {phases:?} give unequal output lengths for length {len}, step {step}"
        )));
    }
    let per_phase = rows / phases.len();
    let mut out = Vec::with_capacity(rows * out_len);
    for row in 0..rows {
        let phase = phases[row / per_phase];
        let src = &x.data()[row * len..(row + 1) * len];
        out.extend((0..out_len).map(|i| src[phase + i * step]));
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = out_len;
    Ok(Tensor::from_parts(shape, out))
}
