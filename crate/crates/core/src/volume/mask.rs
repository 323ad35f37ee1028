use super::Volume;
use crate::error::{Error, Result};

/// Boolean voxel set on a volume grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    extents: [usize; 3],
    data: Vec<bool>,
}

impl Mask {
    pub fn new(extents: [usize; 3], data: Vec<bool>) -> Result<Self> {
        if data.len() != extents.iter().product::<usize>() {
            return Err(Error::Argument(format!(
                "mask with {} voxels for extents {extents:?}",
                data.len()
            )));
        }
        Ok(Self { extents, data })
    }

    pub fn full(extents: [usize; 3]) -> Self {
        Self {
            extents,
            data: vec![true; extents.iter().product()],
        }
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    fn morph(&self, dilate: bool) -> Mask {
        let [nx, ny, nz] = self.extents;
        let at = |x: usize, y: usize, z: usize| self.data[x + nx * (y + ny * z)];
        let mut out = vec![false; self.data.len()];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let neighbours = [
                        (x > 0).then(|| at(x - 1, y, z)),
                        (x + 1 < nx).then(|| at(x + 1, y, z)),
                        (y > 0).then(|| at(x, y - 1, z)),
                        (y + 1 < ny).then(|| at(x, y + 1, z)),
                        (z > 0).then(|| at(x, y, z - 1)),
                        (z + 1 < nz).then(|| at(x, y, z + 1)),
                    ];
                    let mut vals = std::iter::once(at(x, y, z)).chain(neighbours.into_iter().flatten());
                    out[x + nx * (y + ny * z)] = if dilate { vals.any(|b| b) } else { vals.all(|b| b) };
                }
            }
        }
        Mask {
            extents: self.extents,
            data: out,
        }
    }

    /// Dilation then erosion with the 6-connected cross, computed on a copy
    /// padded by one replicated voxel, so a full mask stays full and objects
    /// near the border do not grow.
    pub fn closed(&self) -> Mask {
        let [nx, ny, nz] = self.extents;
        let padded_ext = [nx + 2, ny + 2, nz + 2];
        let clamp = |p: usize, n: usize| p.saturating_sub(1).min(n - 1);
        let mut padded = Vec::with_capacity(padded_ext.iter().product());
        for z in 0..nz + 2 {
            for y in 0..ny + 2 {
                for x in 0..nx + 2 {
                    padded.push(self.data[clamp(x, nx) + nx * (clamp(y, ny) + ny * clamp(z, nz))]);
                }
            }
        }
        let closed = Mask {
            extents: padded_ext,
            data: padded,
        }
        .morph(true)
        .morph(false);
        let mut data = Vec::with_capacity(self.data.len());
        for z in 1..=nz {
            for y in 1..=ny {
                let row = (nx + 2) * (y + (ny + 2) * z);
                data.extend_from_slice(&closed.data[row + 1..row + 1 + nx]);
            }
        }
        Mask {
            extents: self.extents,
            data,
        }
    }
}

/// Foreground mask: voxels at or above `fraction` of the 99th percentile,
/// followed by one 6-connected closing.
pub fn head_mask(volume: &Volume, fraction: f64) -> Result<Mask> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!(
            "mask fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let p99 = volume.percentile(0.99);
    if p99 <= 0.0 {
        return Ok(Mask {
            extents: volume.extents(),
            data: vec![false; volume.len()],
        });
    }
    let threshold = fraction * p99;
    let raw = Mask {
        extents: volume.extents(),
        data: volume.data().iter().map(|&v| v >= threshold).collect(),
    };
    Ok(raw.closed())
}
