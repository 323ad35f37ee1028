//! Kernel generator: a learnable seed tensor pushed through a linear stack of
//! 1D convolutions, then softmax.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::profile::Profile;
use crate::error::{Error, Result};
use crate::tensorcore::{adam_step, softmax_values, AdamConfig, AdamState, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    /// Profile length `K` (odd).
    pub taps: usize,
    /// Channel count of the seed tensor and hidden layers.
    pub channels: usize,
    pub layers: usize,
    pub kernel_width: usize,
    /// Centre-tap mass the initial profile is fitted to.
    pub impulse_centre: f64,
    /// Adam learning rate of the impulse fit.
    pub impulse_lr: f64,
    pub impulse_max_steps: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            taps: 21,
            channels: 64,
            layers: 4,
            kernel_width: 3,
            impulse_centre: 0.9,
            impulse_lr: 1e-3,
            impulse_max_steps: 5000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    /// Learnable input, `[1, C, K]`.
    pub seed: Tensor,
    /// Conv kernels `[out, in, width]`; the last one has a single output channel.
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

/// Tape handles for one generator evaluation.
pub struct GeneratorVars {
    /// Learnable leaves in [`GeneratorParams::learnable`] order.
    pub params: Vec<Var>,
    /// The profile, shape `[K]`.
    pub profile: Var,
}

fn uniform_tensor<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
    let dist = Uniform::new_inclusive(-bound, bound);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("consistent shape")
}

impl GeneratorParams {
    /// Random parameters followed by an impulse fit: the profile starts with
    /// `impulse_centre` of its mass on the centre tap.
    pub fn init<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> Result<Self> {
        let mut g = Self::random(cfg, rng);
        let adam = AdamConfig {
            lr: cfg.impulse_lr,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let steps = g.fit_impulse(cfg.impulse_centre, &adam, cfg.impulse_max_steps)?;
        log::debug!("impulse fit took {steps} steps");
        Ok(g)
    }

    /// Seed ~ N(0, 1); conv weights and biases ~ U(±1/√fan_in).
    pub fn random<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> Self {
        let c = cfg.channels;
        let k = cfg.taps;
        let seed_data = (0..c * k).map(|_| StandardNormal.sample(rng)).collect();
        let seed = Tensor::new(&[1, c, k], seed_data).expect("consistent shape");
        let mut weights = Vec::with_capacity(cfg.layers);
        let mut biases = Vec::with_capacity(cfg.layers);
        for layer in 0..cfg.layers {
            let out = if layer + 1 == cfg.layers { 1 } else { c };
            let bound = 1.0 / ((c * cfg.kernel_width) as f64).sqrt();
            weights.push(uniform_tensor(&[out, c, cfg.kernel_width], bound, rng));
            biases.push(uniform_tensor(&[out], bound, rng));
        }
        Self { seed, weights, biases }
    }

    pub fn taps(&self) -> usize {
        self.seed.shape()[2]
    }

    /// Trainable tensors: seed, then (weight, bias) per layer.
    pub fn learnable(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.seed];
        for (w, b) in self.weights.iter().zip(&self.biases) {
            v.push(w);
            v.push(b);
        }
        v
    }

    pub fn learnable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.seed];
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            v.push(w);
            v.push(b);
        }
        v
    }

    /// Records the generator on `tape`; parameters are leaves that require
    /// gradients when `trainable` is set.
    pub fn forward(&self, tape: &mut Tape, trainable: bool) -> Result<GeneratorVars> {
        let params: Vec<Var> = self
            .learnable()
            .into_iter()
            .map(|t| tape.leaf(t.clone(), trainable))
            .collect();
        let pad = self.weights.first().map_or(0, |w| w.shape()[2] / 2);
        let mut x = params[0];
        for layer in 0..self.weights.len() {
            x = tape.conv1d(x, params[1 + 2 * layer], pad)?;
            x = tape.add_channel_bias(x, params[2 + 2 * layer])?;
        }
        let logits = tape.reshape(x, &[self.taps()])?;
        let profile = tape.softmax(logits);
        Ok(GeneratorVars { params, profile })
    }

    /// Adam steps on `-ln k_centre` until the centre tap reaches `target`.
    /// Returns the number of steps taken.
    pub fn fit_impulse(&mut self, target: f64, adam: &AdamConfig, max_steps: usize) -> Result<usize> {
        let centre = self.taps() / 2;
        let mut states: Vec<AdamState> = self.learnable().into_iter().map(AdamState::new).collect();
        let mut reached = 0.0;
        for step in 0..=max_steps {
            let mut tape = Tape::new();
            let vars = self.forward(&mut tape, true)?;
            reached = tape.value(vars.profile).data()[centre];
            if reached >= target {
                return Ok(step);
            }
            if step == max_steps {
                break;
            }
            let mut pick = vec![0.0; self.taps()];
            pick[centre] = -1.0;
            let log_k = tape.log(vars.profile);
            let loss = tape.dot_const(log_k, Tensor::from_vec(pick))?;
            let mut grads = tape.backward(loss)?;
            for ((p, v), s) in self.learnable_mut().into_iter().zip(&vars.params).zip(&mut states) {
                adam_step(p, &grads.take(*v).expect("generator leaf on tape"), s, adam);
            }
        }
        Err(Error::Config(format!(
            "impulse fit reached a centre tap of {reached:.4} after {max_steps} steps; target {target}"
        )))
    }

    /// The current profile, without recording gradients.
    pub fn profile(&self, spacing_mm: f64) -> Result<Profile> {
        let mut tape = Tape::new();
        let vars = self.forward(&mut tape, false)?;
        Profile::normalized(tape.value(vars.profile).data().to_vec(), spacing_mm)
    }
}

/// Softmax of a logit vector as a [`Profile`].
pub fn profile_from_logits(logits: &[f64], spacing_mm: f64) -> Result<Profile> {
    let p = softmax_values(&Tensor::from_vec(logits.to_vec()));
    Profile::normalized(p.into_data(), spacing_mm)
}
