//! Ground-truth slice profiles, through-plane degradation, and procedural
//! isotropic phantoms.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::Profile;
use crate::volume::{gaussian_taps, percentile, smooth_separable, Volume};

/// Intensities of the three phantom tissue classes.
pub const PHANTOM_LEVELS: [f64; 3] = [0.2, 0.6, 1.0];
pub const MIN_PHANTOM_EXTENT: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Gaussian,
    Rect,
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileKind::Gaussian => "gaussian",
            ProfileKind::Rect => "rect",
        })
    }
}

impl FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(ProfileKind::Gaussian),
            "rect" => Ok(ProfileKind::Rect),
            other => Err(Error::Argument(format!(
                "unknown profile kind {other:?}; use gaussian or rect"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthProfileSpec {
    pub kind: ProfileKind,
    pub fwhm_mm: f64,
    pub spacing_mm: f64,
    /// Support length, odd.
    pub taps: usize,
}

impl TruthProfileSpec {
    pub fn new(kind: ProfileKind, fwhm_mm: f64, spacing_mm: f64, taps: usize) -> Self {
        Self {
            kind,
            fwhm_mm,
            spacing_mm,
            taps,
        }
    }

    /// Gaussian standard deviation for the requested FWHM.
    pub fn sigma_mm(&self) -> f64 {
        self.fwhm_mm / (2.0 * (2.0 * 2f64.ln()).sqrt())
    }
}

/// Point-sampled Gaussian or area-sampled rect, normalized to unit sum.
pub fn make_profile(spec: &TruthProfileSpec) -> Result<Profile> {
    let TruthProfileSpec {
        kind,
        fwhm_mm,
        spacing_mm,
        taps,
    } = *spec;
    if !(fwhm_mm > 0.0 && fwhm_mm.is_finite()) || !(spacing_mm > 0.0 && spacing_mm.is_finite()) {
        return Err(Error::Config(format!(
            "FWHM ({fwhm_mm} mm) and spacing ({spacing_mm} mm) must be positive"
        )));
    }
    if taps % 2 == 0 {
        return Err(Error::Config(format!("profile support must be odd, got {taps}")));
    }
    if (taps as f64) * spacing_mm < 2.0 * fwhm_mm {
        return Err(Error::Config(format!(
            "{taps} taps at {spacing_mm} mm cover {} mm; a {fwhm_mm} mm FWHM needs at least {} mm",
            taps as f64 * spacing_mm,
            2.0 * fwhm_mm
        )));
    }
    let c = (taps / 2) as f64;
    let values = (0..taps).map(|i| {
        let x = (i as f64 - c) * spacing_mm;
        match kind {
            ProfileKind::Gaussian => {
                let s = spec.sigma_mm();
                (-x * x / (2.0 * s * s)).exp()
            }
            ProfileKind::Rect => {
                let half = fwhm_mm / 2.0;
                let lo = (x - spacing_mm / 2.0).max(-half);
                let hi = (x + spacing_mm / 2.0).min(half);
                (hi - lo).max(0.0)
            }
        }
    });
    Profile::normalized(values.collect(), spacing_mm)
}

/// Blurs every z-column with `profile` (valid correlation), keeps every
/// `scale`-th sample from index 0, and multiplies the z spacing by `scale`.
pub fn degrade_volume(volume: &Volume, profile: &Profile, scale: usize) -> Result<Volume> {
    degrade_volume_taps(volume, profile.taps(), scale)
}

/// [`degrade_volume`] with raw taps of any length.
pub fn degrade_volume_taps(volume: &Volume, taps: &[f64], scale: usize) -> Result<Volume> {
    if scale == 0 {
        return Err(Error::Argument("scale must be at least 1".into()));
    }
    if taps.is_empty() {
        return Err(Error::Argument("empty degradation kernel".into()));
    }
    let [nx, ny, nz] = volume.extents();
    if nz < taps.len() {
        return Err(Error::Size(format!(
            "z extent {nz} is shorter than the {}-tap profile",
            taps.len()
        )));
    }
    let full = nz - taps.len() + 1;
    let out_z = (full - 1) / scale + 1;
    let plane = nx * ny;
    let src = volume.data();
    let mut data = vec![0.0; plane * out_z];
    for (oz, out) in data.chunks_exact_mut(plane).enumerate() {
        let z0 = oz * scale;
        for (t, &w) in taps.iter().enumerate() {
            let slab = &src[(z0 + t) * plane..(z0 + t + 1) * plane];
            for (o, &v) in out.iter_mut().zip(slab) {
                *o += w * v;
            }
        }
    }
    let [sx, sy, sz] = volume.spacing();
    Volume::new([nx, ny, out_z], [sx, sy, sz * scale as f64], data)
}

/// Isotropic three-class random phantom with unit spacing.
///
/// White noise is smoothed with a Gaussian of `correlation_length` voxels,
/// split at its tertiles into [`PHANTOM_LEVELS`], then smoothed with σ = 0.5.
pub fn make_phantom(seed: u64, extents: [usize; 3], correlation_length: f64) -> Result<Volume> {
    if let Some(&e) = extents.iter().find(|&&e| e < MIN_PHANTOM_EXTENT) {
        return Err(Error::Size(format!(
            "phantom extents must be at least {MIN_PHANTOM_EXTENT} per axis, got {e}"
        )));
    }
    if !(correlation_length > 0.0 && correlation_length.is_finite()) {
        return Err(Error::Argument(format!(
            "correlation length must be positive, got {correlation_length}"
        )));
    }
    let n: usize = extents.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let field = smooth_separable(&noise, extents, &gaussian_taps(correlation_length));
    let t1 = percentile(&field, 1.0 / 3.0);
    let t2 = percentile(&field, 2.0 / 3.0);
    let classes: Vec<f64> = field
        .iter()
        .map(|&v| {
            if v < t1 {
                PHANTOM_LEVELS[0]
            } else if v < t2 {
                PHANTOM_LEVELS[1]
            } else {
                PHANTOM_LEVELS[2]
            }
        })
        .collect();
    let data = smooth_separable(&classes, extents, &gaussian_taps(0.5));
    Volume::new(extents, [1.0; 3], data)
}
