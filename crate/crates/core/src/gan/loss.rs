//! Adversarial and profile-regularization losses.

use super::profile::Profile;
use crate::error::{Error, Result};
use crate::tensorcore::{Tape, Tensor, Var};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

fn mean_log(tape: &mut Tape, p: Var, complement: bool) -> Var {
    let p = tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS);
    let p = if complement { tape.affine(p, -1.0, 1.0) } else { p };
    let l = tape.log(p);
    tape.mean(l)
}

/// `mean log D(G(I₁)ᵀ) + mean log(1 - D(G(I₂)))`, minimized by the generator.
pub fn adv_loss_generator(tape: &mut Tape, d_transposed: Var, d_plain: Var) -> Result<Var> {
    let a = mean_log(tape, d_transposed, false);
    let b = mean_log(tape, d_plain, true);
    tape.add(a, b)
}

/// Negated value function, minimized by the discriminator. Generator outputs
/// feeding the maps are expected to be detached.
pub fn adv_loss_discriminator(tape: &mut Tape, d_transposed: Var, d_plain: Var) -> Result<Var> {
    let v = adv_loss_generator(tape, d_transposed, d_plain)?;
    Ok(tape.affine(v, -1.0, 0.0))
}

fn on_maps(d_transposed: &Tensor, d_plain: &Tensor, f: fn(&mut Tape, Var, Var) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(d_transposed.clone());
    let b = tape.constant(d_plain.clone());
    let l = f(&mut tape, a, b)?;
    Ok(tape.value(l).item())
}

pub fn adv_loss_generator_value(d_transposed: &Tensor, d_plain: &Tensor) -> Result<f64> {
    on_maps(d_transposed, d_plain, adv_loss_generator)
}

pub fn adv_loss_discriminator_value(d_transposed: &Tensor, d_plain: &Tensor) -> Result<f64> {
    on_maps(d_transposed, d_plain, adv_loss_discriminator)
}

/// `(Σ i·k_i - ⌊K/2⌋)²` for a profile var of shape `[K]`.
pub fn centroid_loss(tape: &mut Tape, profile: Var) -> Result<Var> {
    let k = tape.value(profile).len();
    let idx = Tensor::from_vec((0..k).map(|i| i as f64).collect());
    let c = tape.dot_const(profile, idx)?;
    let off = tape.affine(c, 1.0, -((k / 2) as f64));
    Ok(tape.square(off))
}

/// `k₀ + k₁ + k_{K-1} + k_{K-2}`; needs `K ≥ 5`.
pub fn boundary_loss(tape: &mut Tape, profile: Var) -> Result<Var> {
    let k = tape.value(profile).len();
    if k < 5 {
        return Err(Error::Config(format!("boundary loss needs at least 5 taps, got {k}")));
    }
    let mut mask = vec![0.0; k];
    for i in [0, 1, k - 2, k - 1] {
        mask[i] = 1.0;
    }
    tape.dot_const(profile, Tensor::from_vec(mask))
}

fn on_profile(profile: &Profile, f: fn(&mut Tape, Var) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::from_vec(profile.taps().to_vec()));
    let l = f(&mut tape, p)?;
    Ok(tape.value(l).item())
}

pub fn centroid_loss_value(profile: &Profile) -> f64 {
    on_profile(profile, centroid_loss).expect("centroid loss has no failure mode")
}

pub fn boundary_loss_value(profile: &Profile) -> Result<f64> {
    on_profile(profile, boundary_loss)
}
