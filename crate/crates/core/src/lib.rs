//! Estimation of the relative slice profile of an anisotropic MR volume.
//!
//! A small GAN learns the 1D kernel that, applied to the high-resolution
//! in-plane directions and followed by downsampling, makes their patches
//! indistinguishable from patches along the low-resolution through-plane
//! axis. The crate also carries the simulation and evaluation pipeline
//! around the estimator and the `sliceprofile` command-line tool.

pub mod cli;
pub mod error;
pub mod gan;
pub mod metrics;
pub mod simulate;
pub mod tensorcore;
pub mod trainer;
pub mod volume;

pub use error::{Error, Result};
pub use gan::Profile;
pub use volume::Volume;
