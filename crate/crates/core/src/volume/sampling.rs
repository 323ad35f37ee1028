//! Random extraction of 2D patches from the `xz` and `yz` planes.
//!
//! Patch rows run along z (the low-resolution axis) and columns along x or y.
//! Centres are drawn with probability proportional to the smoothed gradient
//! magnitude at the centre voxel.

use rand::Rng;

use super::{gaussian_taps, smooth_separable, Volume};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Plane {
    Xz,
    Yz,
}

/// A `rows × cols` slab; rows follow z (LR), columns follow x or y (HR).
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub plane: Plane,
    pub center: [usize; 3],
}

impl Patch {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, plane: Plane) -> Result<Self> {
        if values.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::dim(
                "patch",
                format!("{} values for a {rows}x{cols} patch", values.len()),
            ));
        }
        Ok(Self {
            rows,
            cols,
            values,
            plane,
            center: [0; 3],
        })
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }
}

/// Sampling distribution over patch centres for one patch footprint.
#[derive(Clone, Debug)]
pub struct SampleWeights {
    rows: usize,
    cols: usize,
    /// Per-voxel weight, zero outside the valid centre region.
    weights: Vec<f64>,
    centers: Vec<usize>,
    cdf: Vec<f64>,
}

impl SampleWeights {
    /// Explicit weights over the given footprint. Invalid centres must carry
    /// zero weight.
    pub fn from_weights(volume: &Volume, rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != volume.len() {
            return Err(Error::Argument("weight grid does not match the volume".into()));
        }
        let valid = valid_centers(volume, rows, cols)?;
        let mut is_valid = vec![false; volume.len()];
        valid.iter().for_each(|&i| is_valid[i] = true);
        if weights
            .iter()
            .zip(&is_valid)
            .any(|(&w, &ok)| w < 0.0 || (!ok && w != 0.0))
        {
            return Err(Error::Argument(
                "weights must be nonnegative and zero outside valid centres".into(),
            ));
        }
        Self::build(rows, cols, weights, valid)
    }

    fn build(rows: usize, cols: usize, mut weights: Vec<f64>, centers: Vec<usize>) -> Result<Self> {
        let total: f64 = centers.iter().map(|&i| weights[i]).sum();
        if total > 0.0 && total.is_finite() {
            weights.iter_mut().for_each(|w| *w /= total);
        } else {
            weights.iter_mut().for_each(|w| *w = 0.0);
            let u = 1.0 / centers.len() as f64;
            centers.iter().for_each(|&i| weights[i] = u);
        }
        let mut acc = 0.0;
        let cdf = centers
            .iter()
            .map(|&i| {
                acc += weights[i];
                acc
            })
            .collect();
        Ok(Self {
            rows,
            cols,
            weights,
            centers,
            cdf,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn footprint(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn num_centers(&self) -> usize {
        self.centers.len()
    }

    /// Inverse-CDF draw of a centre voxel index.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("at least one centre");
        let u = rng.gen::<f64>() * total;
        let k = self.cdf.partition_point(|&c| c <= u).min(self.centers.len() - 1);
        self.centers[k]
    }
}

/// First index covered by a run of `len` samples centred on `center`.
fn start_of(center: usize, len: usize) -> Option<usize> {
    center.checked_sub(len / 2)
}

fn fits(center: usize, len: usize, extent: usize) -> bool {
    start_of(center, len).is_some_and(|s| s + len <= extent)
}

fn valid_centers(volume: &Volume, rows: usize, cols: usize) -> Result<Vec<usize>> {
    let [nx, ny, nz] = volume.extents();
    if rows == 0 || cols == 0 || nx < cols || ny < cols || nz < rows {
        return Err(Error::Size(format!(
            "a {rows}x{cols} patch needs extents of at least ({cols}, {cols}, {rows}), volume is ({nx}, {ny}, {nz})"
        )));
    }
    let mut out = Vec::new();
    for z in (0..nz).filter(|&z| fits(z, rows, nz)) {
        for y in (0..ny).filter(|&y| fits(y, cols, ny)) {
            for x in (0..nx).filter(|&x| fits(x, cols, nx)) {
                out.push(volume.index(x, y, z));
            }
        }
    }
    Ok(out)
}

/// Central-difference gradient magnitude (one-sided at the borders), in
/// voxel units.
pub(crate) fn gradient_magnitude(volume: &Volume) -> Vec<f64> {
    let [nx, ny, nz] = volume.extents();
    let ext = [nx, ny, nz];
    let strides = [1, nx, nx * ny];
    let d = volume.data();
    let mut out = vec![0.0; d.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let c = volume.coords(i);
        let mut sq = 0.0;
        for axis in 0..3 {
            let n = ext[axis];
            if n < 2 {
                continue;
            }
            let s = strides[axis];
            let g = if c[axis] == 0 {
                d[i + s] - d[i]
            } else if c[axis] == n - 1 {
                d[i] - d[i - s]
            } else {
                0.5 * (d[i + s] - d[i - s])
            };
            sq += g * g;
        }
        *o = sq.sqrt();
    }
    out
}

/// Smoothed gradient magnitude (Gaussian, σ = 1 voxel) restricted to centres
/// where a `rows × cols` patch fits in both the xz and yz planes.
pub fn gradient_weights(volume: &Volume, rows: usize, cols: usize) -> Result<SampleWeights> {
    let centers = valid_centers(volume, rows, cols)?;
    let smoothed = smooth_separable(&gradient_magnitude(volume), volume.extents(), &gaussian_taps(1.0));
    let mut weights = vec![0.0; volume.len()];
    for &i in &centers {
        weights[i] = smoothed[i];
    }
    SampleWeights::build(rows, cols, weights, centers)
}

/// Extracts the patch centred on a drawn voxel. `rows`/`cols` must match the
/// footprint the weights were built for.
pub fn sample_patch<R: Rng + ?Sized>(
    volume: &Volume,
    weights: &SampleWeights,
    rng: &mut R,
    plane: Plane,
    rows: usize,
    cols: usize,
) -> Result<Patch> {
    if (rows, cols) != weights.footprint() {
        return Err(Error::Argument(format!(
            "weights were built for {:?} patches, asked for {rows}x{cols}",
            weights.footprint()
        )));
    }
    let center = volume.coords(weights.draw(rng));
    Ok(extract(volume, center, plane, rows, cols))
}

pub(crate) fn extract(volume: &Volume, center: [usize; 3], plane: Plane, rows: usize, cols: usize) -> Patch {
    let [cx, cy, cz] = center;
    let z0 = cz - rows / 2;
    let mut values = Vec::with_capacity(rows * cols);
    match plane {
        Plane::Xz => {
            let x0 = cx - cols / 2;
            for z in z0..z0 + rows {
                let row = volume.index(x0, cy, z);
                values.extend_from_slice(&volume.data()[row..row + cols]);
            }
        }
        Plane::Yz => {
            let y0 = cy - cols / 2;
            for z in z0..z0 + rows {
                values.extend((y0..y0 + cols).map(|y| volume.get(cx, y, z)));
            }
        }
    }
    Patch {
        rows,
        cols,
        values,
        plane,
        center,
    }
}

/// Seeded source of patches with a fair coin between the two planes.
pub struct PatchSampler<'a> {
    volume: &'a Volume,
    weights: SampleWeights,
}

impl<'a> PatchSampler<'a> {
    pub fn new(volume: &'a Volume, rows: usize, cols: usize) -> Result<Self> {
        Ok(Self {
            volume,
            weights: gradient_weights(volume, rows, cols)?,
        })
    }

    pub fn weights(&self) -> &SampleWeights {
        &self.weights
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Patch {
        draw_patch(self.volume, &self.weights, rng)
    }
}

/// Fair coin between the two planes, then a weighted centre draw.
pub fn draw_patch<R: Rng + ?Sized>(volume: &Volume, weights: &SampleWeights, rng: &mut R) -> Patch {
    let plane = if rng.gen_bool(0.5) { Plane::Xz } else { Plane::Yz };
    let center = volume.coords(weights.draw(rng));
    let (rows, cols) = weights.footprint();
    extract(volume, center, plane, rows, cols)
}
