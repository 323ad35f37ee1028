//! Volume files.
//!
//! Two formats are read:
//!
//! * raw little-endian `float32` voxels (x fastest) with a JSON sidecar at
//!   `<path>.json` holding `{"extents": [nx, ny, nz], "spacing_mm": [sx, sy, sz]}`;
//!   this is also the only format written.
//! * single-file NIfTI-1 (`n+1`), uncompressed, little-endian, `int16` or
//!   `float32` voxels. Anything else is rejected as unsupported.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::Volume;
use crate::error::{Error, Result};

const NIFTI_HEADER_LEN: usize = 348;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

#[derive(Serialize, Deserialize)]
struct Sidecar {
    extents: [usize; 3],
    spacing_mm: [f64; 3],
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        return Err(Error::Unsupported(format!("{} is gzip-compressed", path.display())));
    }
    if bytes.len() >= 4 {
        let le = i32::from_le_bytes(bytes[..4].try_into().unwrap());
        let be = i32::from_be_bytes(bytes[..4].try_into().unwrap());
        if le == NIFTI_HEADER_LEN as i32 || be == NIFTI_HEADER_LEN as i32 {
            return read_nifti(path, &bytes, le == NIFTI_HEADER_LEN as i32);
        }
    }
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        return read_raw(path, &bytes, &sidecar);
    }
    Err(Error::Format {
        path: path.to_owned(),
        detail: "unknown magic bytes and no JSON sidecar".into(),
    })
}

fn read_raw(path: &Path, bytes: &[u8], sidecar: &Path) -> Result<Volume> {
    let text = fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
    let meta: Sidecar = serde_json::from_str(&text)?;
    let n: usize = meta.extents.iter().product();
    if bytes.len() != n * 4 {
        return Err(Error::Corrupt {
            path: path.to_owned(),
            detail: format!(
                "expected {} bytes for extents {:?}, found {}",
                n * 4,
                meta.extents,
                bytes.len()
            ),
        });
    }
    let mut data = vec![0f32; n];
    Cursor::new(bytes)
        .read_f32_into::<LittleEndian>(&mut data)
        .map_err(|e| Error::io(path, e))?;
    Volume::new(meta.extents, meta.spacing_mm, data.into_iter().map(f64::from).collect())
}

/// Writes the raw format; voxels are stored as `float32`.
pub fn save_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(volume.len() * 4);
    for &v in volume.data() {
        buf.write_f32::<LittleEndian>(v as f32).expect("write to Vec");
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))?;
    let meta = Sidecar {
        extents: volume.extents(),
        spacing_mm: volume.spacing(),
    };
    let sidecar = sidecar_path(path);
    fs::write(&sidecar, serde_json::to_string(&meta)?).map_err(|e| Error::io(&sidecar, e))
}

fn read_nifti(path: &Path, bytes: &[u8], little_endian: bool) -> Result<Volume> {
    if !little_endian {
        return Err(Error::Unsupported("big-endian NIfTI".into()));
    }
    let corrupt = |detail: String| Error::Corrupt {
        path: path.to_owned(),
        detail,
    };
    if bytes.len() < NIFTI_HEADER_LEN {
        return Err(corrupt(format!("header truncated at {} bytes", bytes.len())));
    }
    match &bytes[344..348] {
        b"n+1\0" => {}
        b"ni1\0" => return Err(Error::Unsupported("two-file NIfTI (.hdr/.img)".into())),
        other => {
            return Err(Error::Format {
                path: path.to_owned(),
                detail: format!("bad NIfTI magic {other:?}"),
            })
        }
    }
    let hdr = &bytes[..NIFTI_HEADER_LEN];
    let i16_at = |off: usize| i16::from_le_bytes([hdr[off], hdr[off + 1]]);
    let f32_at = |off: usize| f32::from_le_bytes(hdr[off..off + 4].try_into().unwrap());

    let dim: Vec<i16> = (0..8).map(|k| i16_at(40 + 2 * k)).collect();
    let ndim = dim[0];
    if !(3..=7).contains(&ndim) || (4..=ndim as usize).any(|k| dim[k] != 1) {
        return Err(Error::Unsupported(format!("{ndim}-dimensional NIfTI data")));
    }
    if dim[1..4].iter().any(|&d| d < 1) {
        return Err(corrupt(format!("non-positive dimensions {:?}", &dim[1..4])));
    }
    let extents = [dim[1] as usize, dim[2] as usize, dim[3] as usize];
    let datatype = i16_at(70);
    let width = match datatype {
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => return Err(Error::Unsupported(format!("NIfTI datatype code {other}"))),
    };
    let spacing = [f32_at(80), f32_at(84), f32_at(88)].map(|s| f64::from(s.abs()));
    let offset = f32_at(108);
    if offset < NIFTI_HEADER_LEN as f32 || offset.fract() != 0.0 {
        return Err(corrupt(format!("invalid vox_offset {offset}")));
    }
    let offset = offset as usize;
    let n: usize = extents.iter().product();
    let need = offset + n * width;
    if bytes.len() < need {
        return Err(corrupt(format!(
            "data section needs {need} bytes, file has {}",
            bytes.len()
        )));
    }
    let mut cur = Cursor::new(&bytes[offset..need]);
    let raw: Vec<f64> = match datatype {
        DT_INT16 => {
            let mut v = vec![0i16; n];
            cur.read_i16_into::<LittleEndian>(&mut v)
                .map_err(|e| Error::io(path, e))?;
            v.into_iter().map(f64::from).collect()
        }
        _ => {
            let mut v = vec![0f32; n];
            cur.read_f32_into::<LittleEndian>(&mut v)
                .map_err(|e| Error::io(path, e))?;
            v.into_iter().map(f64::from).collect()
        }
    };
    let (slope, inter) = (f64::from(f32_at(112)), f64::from(f32_at(116)));
    let data = if slope != 0.0 && slope.is_finite() && !(slope == 1.0 && inter == 0.0) {
        raw.into_iter().map(|v| v * slope + inter).collect()
    } else {
        raw
    };
    Volume::new(extents, spacing, data)
}
