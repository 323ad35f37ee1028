//! Volumes, head masks, and the gradient-weighted patch sampler.
//!
//! Voxels are stored x-fastest: `index = x + nx * (y + ny * z)`. The z axis
//! is the low-resolution (through-plane) direction.

mod io;
mod mask;
mod sampling;

pub use io::{load_volume, save_volume, sidecar_path};
pub use mask::{head_mask, Mask};
pub use sampling::{draw_patch, gradient_weights, sample_patch, Patch, PatchSampler, Plane, SampleWeights};

use crate::error::{Error, Result};

/// Tolerance on `s_x == s_y` for the estimation path.
pub const IN_PLANE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    extents: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f64>,
}

impl Volume {
    pub fn new(extents: [usize; 3], spacing: [f64; 3], data: Vec<f64>) -> Result<Self> {
        if extents.iter().any(|&e| e == 0) {
            return Err(Error::Argument(format!(
                "volume extents must be positive, got {extents:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Argument(format!(
                "voxel spacing must be positive, got {spacing:?}"
            )));
        }
        let n = extents.iter().product::<usize>();
        if data.len() != n {
            return Err(Error::Argument(format!(
                "extents {extents:?} need {n} voxels but {} were given",
                data.len()
            )));
        }
        Ok(Self { extents, spacing, data })
    }

    pub fn filled(extents: [usize; 3], spacing: [f64; 3], value: f64) -> Result<Self> {
        Self::new(extents, spacing, vec![value; extents.iter().product()])
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.extents[0] * (y + self.extents[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.extents;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Volume {
        Volume {
            extents: self.extents,
            spacing: self.spacing,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Through-plane to in-plane spacing ratio `s_z / s_x`.
    ///
    /// Fails unless `s_x == s_y` (within [`IN_PLANE_TOLERANCE`]) and `s_x <= s_z`.
    pub fn anisotropy(&self) -> Result<f64> {
        let [sx, sy, sz] = self.spacing;
        if (sx - sy).abs() > IN_PLANE_TOLERANCE {
            return Err(Error::Argument(format!(
                "in-plane spacings differ ({sx} vs {sy} mm); x and y must share a resolution"
            )));
        }
        if sz + IN_PLANE_TOLERANCE < sx {
            return Err(Error::Argument(format!(
                "through-plane spacing {sz} mm is finer than in-plane {sx} mm"
            )));
        }
        Ok(sz / sx)
    }

    /// The `q`-quantile of the voxel values (nearest rank).
    pub fn percentile(&self, q: f64) -> f64 {
        percentile(&self.data, q)
    }

    /// Copy rescaled so that its 99th percentile equals one. Volumes whose
    /// 99th percentile is not positive fall back to the largest magnitude.
    pub fn normalized(&self) -> Volume {
        let p = self.percentile(0.99);
        let scale = if p > 0.0 {
            p
        } else {
            self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        };
        if scale > 0.0 {
            self.map(|v| v / scale)
        } else {
            self.clone()
        }
    }

    /// Swaps two axes (0 = x, 1 = y, 2 = z), permuting spacing with them.
    pub fn swap_axes(&self, a: usize, b: usize) -> Volume {
        let mut ext = self.extents;
        ext.swap(a, b);
        let mut sp = self.spacing;
        sp.swap(a, b);
        let mut data = vec![0.0; self.data.len()];
        for (i, &v) in self.data.iter().enumerate() {
            let mut c = self.coords(i);
            c.swap(a, b);
            data[c[0] + ext[0] * (c[1] + ext[1] * c[2])] = v;
        }
        Volume {
            extents: ext,
            spacing: sp,
            data,
        }
    }
}

pub(crate) fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    let (_, nth, _) = v.select_nth_unstable_by(rank, f64::total_cmp);
    *nth
}

/// Normalized Gaussian taps with radius `ceil(4σ)`.
pub(crate) fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Separable smoothing along every axis with replicated borders.
pub(crate) fn smooth_separable(data: &[f64], extents: [usize; 3], taps: &[f64]) -> Vec<f64> {
    let mut cur = data.to_vec();
    let radius = (taps.len() / 2) as isize;
    let strides = [1, extents[0], extents[0] * extents[1]];
    for axis in 0..3 {
        let n = extents[axis] as isize;
        let stride = strides[axis];
        let mut next = vec![0.0; cur.len()];
        for (i, out) in next.iter_mut().enumerate() {
            let pos = ((i / stride) % extents[axis]) as isize;
            let base = i - pos as usize * stride;
            let mut acc = 0.0;
            for (t, &w) in taps.iter().enumerate() {
                let p = (pos + t as isize - radius).clamp(0, n - 1) as usize;
                acc += w * cur[base + p * stride];
            }
            *out = acc;
        }
        cur = next;
    }
    cur
}
