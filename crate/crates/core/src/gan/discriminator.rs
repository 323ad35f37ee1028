//! Per-pixel discriminator with a purely horizontal receptive field of 7.
//!
//! Every patch row is treated as an independent 1-channel signal, so a given
//! output pixel can only see the 7 columns of its own row.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::batch_shape;
use crate::error::{Error, Result};
use crate::tensorcore::{Tape, Tensor, Var};

pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    /// Kernel width per layer.
    pub widths: Vec<usize>,
    /// Output channels per layer; the input has one channel.
    pub channels: Vec<usize>,
    pub power_iters: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            widths: vec![3, 3, 3, 1, 1],
            channels: vec![64, 64, 64, 32, 1],
            power_iters: 1,
        }
    }
}

impl DiscriminatorConfig {
    pub fn receptive_field(&self) -> usize {
        1 + self.widths.iter().map(|w| w - 1).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnConv {
    pub weight: Tensor,
    pub bias: Tensor,
    /// Persistent power-iteration vector, length `out`.
    pub u: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    pub layers: Vec<SnConv>,
    pub power_iters: usize,
}

/// Leaves for one recorded forward pass, `(weight, bias)` per layer.
pub struct DiscriminatorVars {
    pub params: Vec<Var>,
}

impl DiscriminatorParams {
    pub fn init<R: Rng + ?Sized>(cfg: &DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        if cfg.widths.len() != cfg.channels.len() || cfg.channels.last() != Some(&1) {
            return Err(Error::Config(
                "discriminator needs one width per layer and a single output channel".into(),
            ));
        }
        let mut layers = Vec::with_capacity(cfg.widths.len());
        let mut in_ch = 1;
        for (&w, &out) in cfg.widths.iter().zip(&cfg.channels) {
            let bound = 1.0 / ((in_ch * w) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let weight = Tensor::new(
                &[out, in_ch, w],
                (0..out * in_ch * w).map(|_| dist.sample(rng)).collect(),
            )?;
            let bias = Tensor::new(&[out], (0..out).map(|_| dist.sample(rng)).collect())?;
            let u: Vec<f64> = (0..out).map(|_| StandardNormal.sample(rng)).collect();
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            layers.push(SnConv {
                weight,
                bias,
                u: Tensor::from_vec(u.into_iter().map(|x| x / norm).collect()),
            });
            in_ch = out;
        }
        Ok(Self {
            layers,
            power_iters: cfg.power_iters,
        })
    }

    pub fn receptive_field(&self) -> usize {
        1 + self.layers.iter().map(|l| l.weight.shape()[2] - 1).sum::<usize>()
    }

    /// Trainable tensors: (weight, bias) per layer.
    pub fn learnable(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn learnable_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> DiscriminatorVars {
        let params = self
            .learnable()
            .into_iter()
            .map(|t| tape.leaf(t.clone(), trainable))
            .collect();
        DiscriminatorVars { params }
    }

    /// Probability map `[B, R, W - 6]` for a batch `[B, R, W]` of patches.
    ///
    /// Runs the configured power iterations per layer; the updated `u`
    /// vectors are stored back only when `persist_u` is set.
    pub fn forward(&mut self, tape: &mut Tape, vars: &DiscriminatorVars, batch: Var, persist_u: bool) -> Result<Var> {
        let (b, rows, cols) = batch_shape(tape.value(batch).shape())?;
        let rf = self.receptive_field();
        if cols < rf {
            return Err(Error::dim(
                "discriminate",
                format!("patch has {cols} columns; the receptive field needs at least {rf}"),
            ));
        }
        let mut x = tape.reshape(batch, &[b * rows, cols, 1])?;
        let n = self.layers.len();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let (w, new_u) = tape.spectral_normalize(vars.params[2 * i], &layer.u, self.power_iters)?;
            if persist_u {
                layer.u = new_u;
            }
            x = tape.conv1d_channels_last(x, w)?;
            x = tape.add_last_bias(x, vars.params[2 * i + 1])?;
            if i + 1 < n {
                x = tape.leaky_relu(x, LEAKY_SLOPE);
            }
        }
        let out_cols = tape.value(x).shape()[1];
        let x = tape.reshape(x, &[b, rows, out_cols])?;
        Ok(tape.sigmoid(x))
    }

    /// Probability map `[rows, cols - 6]` for a single `rows × cols` array,
    /// leaving the stored `u` vectors untouched.
    pub fn discriminate(&self, values: &[f64], rows: usize, cols: usize) -> Result<Tensor> {
        let mut scratch = self.clone();
        let mut tape = Tape::new();
        let vars = scratch.register(&mut tape, false);
        let input = tape.constant(Tensor::new(&[1, rows, cols], values.to_vec())?);
        let out = scratch.forward(&mut tape, &vars, input, false)?;
        let v = tape.value(out);
        Tensor::new(&[rows, v.shape()[2]], v.data().to_vec())
    }
}
