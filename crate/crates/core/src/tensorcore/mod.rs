//! Dense `f64` tensors with a small reverse-mode tape and the optimizer
//! primitives needed to train the kernel GAN.
//!
//! Convolutions follow the cross-correlation convention (no kernel flip), so
//! every kernel is applied in array order. The simulator uses the same
//! convention.

mod conv;
mod optim;
mod spectral;
mod tape;
mod tensor;

pub use conv::{conv1d, conv1d_channels_last};
pub use optim::{adam_step, clip_grad_norm, AdamConfig, AdamState};
pub use spectral::{spectral_normalize, SpectralNorm, SPECTRAL_EPS};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::softmax_values;
