//! Generator, discriminator, degradation, and losses of the kernel GAN.
//!
//! The generator only produces a profile; image patches never pass through a
//! network on the generator side. A patch is degraded by convolving each row
//! with the profile (valid, no padding) and keeping every `scale`-th column.

mod discriminator;
mod generator;
mod loss;
mod profile;

pub use discriminator::{DiscriminatorConfig, DiscriminatorParams, DiscriminatorVars, SnConv, LEAKY_SLOPE};
pub use generator::{profile_from_logits, GeneratorConfig, GeneratorParams, GeneratorVars};
pub use loss::{
    adv_loss_discriminator, adv_loss_discriminator_value, adv_loss_generator, adv_loss_generator_value, boundary_loss,
    boundary_loss_value, centroid_loss, centroid_loss_value, PROB_EPS,
};
pub use profile::{ema_update, Profile, UNIT_SUM_TOLERANCE};

use crate::error::{Error, Result};
use crate::tensorcore::{Tape, Tensor, Var};
use crate::volume::Patch;

pub(crate) fn batch_shape(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [b, r, c] => Ok((b, r, c)),
        _ => Err(Error::dim(
            "patch batch",
            format!("expected [batch, rows, cols], got {shape:?}"),
        )),
    }
}

/// Output width of a degraded row, or an error naming the widths that work.
pub fn degraded_width(cols: usize, taps: usize, scale: usize) -> Result<usize> {
    if scale == 0 {
        return Err(Error::Argument("scale must be at least 1".into()));
    }
    let span = (cols + 1).checked_sub(taps).filter(|&s| s > 0 && s % scale == 0);
    span.map(|s| s / scale).ok_or_else(|| {
        let target = ((cols + 1).saturating_sub(taps) / scale).max(1);
        Error::dim(
            "degrade",
            format!(
                "patch has {cols} columns; expected target·{scale} + {} (e.g. {} for {target} output columns)",
                taps - 1,
                target * scale + taps - 1
            ),
        )
    })
}

/// Degrades a batch `[B, R, C]` along its columns: valid convolution with
/// `profile` (shape `[K]`), then downsampling by `scale`, one phase per patch.
pub fn degrade_batch(tape: &mut Tape, batch: Var, profile: Var, scale: usize, phases: &[usize]) -> Result<Var> {
    let (b, rows, cols) = batch_shape(tape.value(batch).shape())?;
    let k = tape.value(profile).len();
    let target = degraded_width(cols, k, scale)?;
    let flat = tape.reshape(batch, &[b * rows, 1, cols])?;
    let kernel = tape.reshape(profile, &[1, 1, k])?;
    let blurred = tape.conv1d_valid(flat, kernel)?;
    let blurred = tape.reshape(blurred, &[b, rows, target * scale])?;
    tape.downsample_rows(blurred, scale, phases)
}

/// Single-patch degradation with a fixed phase.
pub fn degrade(patch: &Patch, profile: &Profile, scale: usize, phase: usize) -> Result<Patch> {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(&[1, patch.rows, patch.cols], patch.values.clone())?);
    let k = tape.constant(Tensor::from_vec(profile.taps().to_vec()));
    let y = degrade_batch(&mut tape, x, k, scale, &[phase])?;
    let out = tape.value(y);
    let cols = out.shape()[2];
    Ok(Patch {
        rows: patch.rows,
        cols,
        values: out.data().to_vec(),
        plane: patch.plane,
        center: patch.center,
    })
}

/// Stacks equally sized patches into a `[B, R, C]` tensor.
pub fn stack_patches(patches: &[Patch]) -> Result<Tensor> {
    let first = patches
        .first()
        .ok_or_else(|| Error::Argument("empty patch batch".into()))?;
    let mut data = Vec::with_capacity(patches.len() * first.values.len());
    for p in patches {
        if (p.rows, p.cols) != (first.rows, first.cols) {
            return Err(Error::dim(
                "patch batch",
                format!("{}x{} patch among {}x{}", p.rows, p.cols, first.rows, first.cols),
            ));
        }
        data.extend_from_slice(&p.values);
    }
    Tensor::new(&[patches.len(), first.rows, first.cols], data)
}
