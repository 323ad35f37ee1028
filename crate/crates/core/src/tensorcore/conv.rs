//! 1D cross-correlation kernels lowered to GEMM.
//!
//! Channels-first input `[batch, channels, length]` is unfolded into a column
//! matrix `[channels * width, batch * out_len]` so the whole batch is one
//! product against the `[out_ch, channels * width]` kernel matrix.
//!
//! Channels-last input `[batch, length, channels]` needs no unfolding: viewed
//! as a `[batch * length, channels]` matrix, tap `j` of a valid convolution is
//! the same matrix shifted down by `j` rows, so the output is a sum of `width`
//! shifted products computed over every row and trimmed afterwards.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Shape bookkeeping shared by the forward and both backward kernels.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_ch: usize,
    pub len: usize,
    pub out_ch: usize,
    pub width: usize,
    pub padding: usize,
    pub out_len: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], padding: usize) -> Result<Self> {
        if input.len() != 3 || kernel.len() != 3 {
            return Err(Error::dim(
                "conv1d",
                format!("expected [batch, ch, len] and [out, in, k], got {input:?} and {kernel:?}"),
            ));
        }
        let (batch, in_ch, len) = (input[0], input[1], input[2]);
        let (out_ch, k_in, width) = (kernel[0], kernel[1], kernel[2]);
        if k_in != in_ch {
            return Err(Error::dim(
                "conv1d",
                format!("input has {in_ch} channels but kernel expects {k_in}"),
            ));
        }
        let padded = len + 2 * padding;
        if padded < width {
            return Err(Error::dim(
                "conv1d",
                format!("length {len} (padding {padding}) shorter than kernel width {width}"),
            ));
        }
        Ok(Self {
            batch,
            in_ch,
            len,
            out_ch,
            width,
            padding,
            out_len: padded - width + 1,
        })
    }

    fn rows(&self) -> usize {
        self.in_ch * self.width
    }

    fn cols(&self) -> usize {
        self.batch * self.out_len
    }
}

fn im2col(input: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let n = g.cols();
    let mut cols = vec![0.0; g.rows() * n];
    for c in 0..g.in_ch {
        for j in 0..g.width {
            let row = &mut cols[(c * g.width + j) * n..(c * g.width + j + 1) * n];
            for b in 0..g.batch {
                let src = &input[(b * g.in_ch + c) * g.len..(b * g.in_ch + c + 1) * g.len];
                let dst = &mut row[b * g.out_len..(b + 1) * g.out_len];
                for (i, d) in dst.iter_mut().enumerate() {
                    let pos = i + j;
                    if pos >= g.padding && pos - g.padding < g.len {
                        *d = src[pos - g.padding];
                    }
                }
            }
        }
    }
    cols
}

/// `c[m, n] = a[m, k] * b[k, n]` with arbitrary element strides on `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
) {
    gemm_strided(m, k, n, (a, rsa, csa), (b, rsb, csb), 0.0, (c, n, 1));
}

/// `c ← a·b + beta·c` on strided views given as `(slice, row stride, col stride)`.
fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    (a, rsa, csa): (&[f64], usize, usize),
    (b, rsb, csb): (&[f64], usize, usize),
    beta: f64,
    (c, rsc, csc): (&mut [f64], usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Zero-padded cross-correlation: `out[b,o,i] = Σ_c Σ_j x[b,c,i+j-p] · w[o,c,j]`.
pub fn conv1d(input: &Tensor, kernel: &Tensor, padding: usize) -> Result<Tensor> {
    let g = ConvGeometry::new(input.shape(), kernel.shape(), padding)?;
    Ok(conv1d_forward(input.data(), kernel.data(), &g))
}

pub(crate) fn conv1d_forward(input: &[f64], kernel: &[f64], g: &ConvGeometry) -> Tensor {
    let cols = im2col(input, g);
    let n = g.cols();
    let mut prod = vec![0.0; g.out_ch * n];
    gemm(g.out_ch, g.rows(), n, kernel, g.rows(), 1, &cols, n, 1, &mut prod);

    let mut out = vec![0.0; g.batch * g.out_ch * g.out_len];
    for o in 0..g.out_ch {
        for b in 0..g.batch {
            let src = &prod[o * n + b * g.out_len..o * n + (b + 1) * g.out_len];
            let at = (b * g.out_ch + o) * g.out_len;
            out[at..at + g.out_len].copy_from_slice(src);
        }
    }
    Tensor::from_parts(vec![g.batch, g.out_ch, g.out_len], out)
}

/// Rearranges `[batch, out_ch, out_len]` into the `[out_ch, batch * out_len]` GEMM layout.
fn grad_matrix(grad_out: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let n = g.cols();
    let mut m = vec![0.0; g.out_ch * n];
    for b in 0..g.batch {
        for o in 0..g.out_ch {
            let at = (b * g.out_ch + o) * g.out_len;
            m[o * n + b * g.out_len..o * n + (b + 1) * g.out_len].copy_from_slice(&grad_out[at..at + g.out_len]);
        }
    }
    m
}

pub(crate) fn conv1d_grad_input(grad_out: &[f64], kernel: &[f64], g: &ConvGeometry) -> Tensor {
    let n = g.cols();
    let dy = grad_matrix(grad_out, g);
    let mut dcols = vec![0.0; g.rows() * n];
    // dcols = Wᵀ · dy
    gemm(g.rows(), g.out_ch, n, kernel, 1, g.rows(), &dy, n, 1, &mut dcols);

    let mut dx = vec![0.0; g.batch * g.in_ch * g.len];
    for c in 0..g.in_ch {
        for j in 0..g.width {
            let row = &dcols[(c * g.width + j) * n..(c * g.width + j + 1) * n];
            for b in 0..g.batch {
                let dst = &mut dx[(b * g.in_ch + c) * g.len..(b * g.in_ch + c + 1) * g.len];
                for (i, &v) in row[b * g.out_len..(b + 1) * g.out_len].iter().enumerate() {
                    let pos = i + j;
                    if pos >= g.padding && pos - g.padding < g.len {
                        dst[pos - g.padding] += v;
                    }
                }
            }
        }
    }
    Tensor::from_parts(vec![g.batch, g.in_ch, g.len], dx)
}

pub(crate) fn conv1d_grad_kernel(grad_out: &[f64], input: &[f64], g: &ConvGeometry) -> Tensor {
    let n = g.cols();
    let dy = grad_matrix(grad_out, g);
    let cols = im2col(input, g);
    let mut dw = vec![0.0; g.out_ch * g.rows()];
    // dW = dy · colsᵀ
    gemm(g.out_ch, n, g.rows(), &dy, n, 1, &cols, 1, n, &mut dw);
    Tensor::from_parts(vec![g.out_ch, g.in_ch, g.width], dw)
}

/// Shapes of a channels-last valid convolution `[batch, len, in] ⊛ [out, in, k]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ChannelsLast {
    pub batch: usize,
    pub len: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub width: usize,
    pub out_len: usize,
}

impl ChannelsLast {
    pub fn new(input: &[usize], kernel: &[usize]) -> Result<Self> {
        if input.len() != 3 || kernel.len() != 3 {
            return Err(Error::dim(
                "conv1d_channels_last",
                format!("expected [batch, len, ch] and [out, in, k], got {input:?} and {kernel:?}"),
            ));
        }
        let (batch, len, in_ch) = (input[0], input[1], input[2]);
        let (out_ch, k_in, width) = (kernel[0], kernel[1], kernel[2]);
        if k_in != in_ch {
            return Err(Error::dim(
                "conv1d_channels_last",
                format!("input has {in_ch} channels but kernel expects {k_in}"),
            ));
        }
        if len < width {
            return Err(Error::dim(
                "conv1d_channels_last",
                format!("length {len} shorter than kernel width {width}"),
            ));
        }
        Ok(Self {
            batch,
            len,
            in_ch,
            out_ch,
            width,
            out_len: len - width + 1,
        })
    }

    /// Rows of the untrimmed product.
    fn rows(&self) -> usize {
        self.batch * self.len - self.width + 1
    }
}

/// Valid cross-correlation in channels-last layout:
/// `out[b,i,o] = Σ_c Σ_j x[b,i+j,c] · w[o,c,j]`.
pub fn conv1d_channels_last(input: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    let g = ChannelsLast::new(input.shape(), kernel.shape())?;
    Ok(channels_last_forward(input.data(), kernel.data(), &g))
}

pub(crate) fn channels_last_forward(x: &[f64], w: &[f64], g: &ChannelsLast) -> Tensor {
    let (c, o, k) = (g.in_ch, g.out_ch, g.width);
    let mut full = vec![0.0; g.batch * g.len * o];
    for j in 0..k {
        let beta = if j == 0 { 0.0 } else { 1.0 };
        gemm_strided(
            g.rows(),
            c,
            o,
            (&x[j * c..], c, 1),
            (&w[j..], k, c * k),
            beta,
            (&mut full, o, 1),
        );
    }
    let mut out = Vec::with_capacity(g.batch * g.out_len * o);
    for b in 0..g.batch {
        out.extend_from_slice(&full[b * g.len * o..(b * g.len + g.out_len) * o]);
    }
    Tensor::from_parts(vec![g.batch, g.out_len, o], out)
}

/// Scatters `[batch, out_len, out]` into the untrimmed `[batch * len, out]` rows.
fn untrim(grad_out: &[f64], g: &ChannelsLast) -> Vec<f64> {
    let o = g.out_ch;
    let mut full = vec![0.0; g.batch * g.len * o];
    for b in 0..g.batch {
        full[b * g.len * o..(b * g.len + g.out_len) * o]
            .copy_from_slice(&grad_out[b * g.out_len * o..(b + 1) * g.out_len * o]);
    }
    full
}

pub(crate) fn channels_last_grad_input(grad_out: &[f64], w: &[f64], g: &ChannelsLast) -> Tensor {
    let (c, o, k) = (g.in_ch, g.out_ch, g.width);
    let dy = untrim(grad_out, g);
    let mut dx = vec![0.0; g.batch * g.len * c];
    for j in 0..k {
        gemm_strided(
            g.rows(),
            o,
            c,
            (&dy, o, 1),
            (&w[j..], c * k, k),
            1.0,
            (&mut dx[j * c..], c, 1),
        );
    }
    Tensor::from_parts(vec![g.batch, g.len, c], dx)
}

pub(crate) fn channels_last_grad_kernel(grad_out: &[f64], x: &[f64], g: &ChannelsLast) -> Tensor {
    let (c, o, k) = (g.in_ch, g.out_ch, g.width);
    let dy = untrim(grad_out, g);
    let mut dw = vec![0.0; o * c * k];
    for j in 0..k {
        gemm_strided(
            c,
            g.rows(),
            o,
            (&x[j * c..], 1, c),
            (&dy, o, 1),
            0.0,
            (&mut dw[j..], k, c * k),
        );
    }
    Tensor::from_parts(vec![o, c, k], dw)
}
