//! Profile and image-quality metrics: FWHM, profile error, masked PSNR and
//! SSIM, and the combined evaluation report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::Profile;
use crate::simulate::degrade_volume;
use crate::volume::{head_mask, Mask, Volume};

pub const PSNR_CAP_DB: f64 = 200.0;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_TAPS: usize = 11;

/// Full width at half maximum in mm.
pub fn fwhm(profile: &Profile) -> Result<f64> {
    Ok(fwhm_samples(profile.taps())? * profile.spacing_mm())
}

/// Full width at half maximum in samples, from linearly interpolated
/// half-maximum crossings on either side of the peak (plateau).
pub fn fwhm_samples(taps: &[f64]) -> Result<f64> {
    let peak = taps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Measurement(format!("profile maximum {peak} is not positive")));
    }
    let half = peak / 2.0;
    let first = taps.iter().position(|&t| t == peak).unwrap();
    let last = taps.iter().rposition(|&t| t == peak).unwrap();
    let left = (0..first)
        .rev()
        .find(|&i| taps[i] <= half)
        .map(|i| i as f64 + (half - taps[i]) / (taps[i + 1] - taps[i]));
    let right = (last + 1..taps.len())
        .find(|&i| taps[i] <= half)
        .map(|i| i as f64 - (half - taps[i]) / (taps[i - 1] - taps[i]));
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::Measurement(
            "profile does not fall below half maximum on both sides of its peak".into(),
        )),
    }
}

/// Sum of absolute tap differences after shifting the estimate by the
/// integer offset between the rounded centroids.
pub fn profile_error(truth: &Profile, estimate: &Profile) -> Result<f64> {
    let (a, b) = (truth.spacing_mm(), estimate.spacing_mm());
    if (a - b).abs() > 1e-9 * a.max(b) {
        return Err(Error::Argument(format!(
            "profiles sampled at different spacings ({a} vs {b} mm)"
        )));
    }
    Ok(aligned_l1(truth.taps(), estimate.taps()))
}

fn aligned_l1(t: &[f64], e: &[f64]) -> f64 {
    // centre both on a common origin, then align rounded centroids
    let ct = t.len() as isize / 2;
    let ce = e.len() as isize / 2;
    let centroid = |v: &[f64], c: isize| {
        let mass: f64 = v.iter().sum();
        v.iter()
            .enumerate()
            .map(|(i, w)| (i as isize - c) as f64 * w)
            .sum::<f64>()
            / mass
    };
    let shift = centroid(t, ct).round() as isize - centroid(e, ce).round() as isize;
    let at = |v: &[f64], i: isize| usize::try_from(i).ok().and_then(|i| v.get(i)).copied().unwrap_or(0.0);
    let lo = (-ct).min(shift - ce);
    let hi = (t.len() as isize - ct).max(shift + e.len() as isize - ce);
    (lo..hi).map(|p| (at(t, p + ct) - at(e, p - shift + ce)).abs()).sum()
}

fn check_pair(a: &Volume, b: &Volume, mask: &Mask) -> Result<()> {
    if a.extents() != b.extents() || a.extents() != mask.extents() {
        return Err(Error::dim(
            "image metric",
            format!(
                "extents {:?}, {:?} and mask {:?} differ",
                a.extents(),
                b.extents(),
                mask.extents()
            ),
        ));
    }
    if mask.is_empty() {
        return Err(Error::Argument("mask selects no voxels".into()));
    }
    Ok(())
}

fn masked<'a>(v: &'a Volume, mask: &'a Mask) -> impl Iterator<Item = f64> + 'a {
    v.data().iter().zip(mask.data()).filter(|(_, &m)| m).map(|(&x, _)| x)
}

/// Masked PSNR in dB with peak `R = max` of the reference `a` inside the mask.
pub fn psnr(a: &Volume, b: &Volume, mask: &Mask) -> Result<f64> {
    check_pair(a, b, mask)?;
    let peak = masked(a, mask).fold(f64::NEG_INFINITY, f64::max);
    let (sum, n) = masked(a, mask)
        .zip(masked(b, mask))
        .fold((0.0, 0usize), |(s, n), (x, y)| (s + (x - y) * (x - y), n + 1));
    let mse = sum / n as f64;
    if mse < peak * peak * 1e-20 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Masked dynamic range (max − min) of `v`.
pub fn masked_range(v: &Volume, mask: &Mask) -> f64 {
    let (lo, hi) = masked(v, mask).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
    hi - lo
}

/// Mean SSIM over the mask with `R` = masked dynamic range of `a`.
pub fn ssim(a: &Volume, b: &Volume, mask: &Mask) -> Result<f64> {
    check_pair(a, b, mask)?;
    ssim_with_range(a, b, mask, masked_range(a, mask))
}

/// Mean SSIM over the mask for an explicit dynamic range.
///
/// Local statistics use an 11-tap Gaussian window (σ = 1.5) per axis; near
/// the border the window is truncated and renormalized.
pub fn ssim_with_range(a: &Volume, b: &Volume, mask: &Mask, range: f64) -> Result<f64> {
    check_pair(a, b, mask)?;
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let ext = a.extents();
    let taps = ssim_window();
    let (x, y) = (a.data(), b.data());
    let mu_x = window_mean(x, ext, &taps);
    let mu_y = window_mean(y, ext, &taps);
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let xx = window_mean(&prod(x, x), ext, &taps);
    let yy = window_mean(&prod(y, y), ext, &taps);
    let xy = window_mean(&prod(x, y), ext, &taps);
    let mut total = 0.0;
    let mut n = 0usize;
    for i in (0..a.len()).filter(|&i| mask.data()[i]) {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = xx[i] - mx * mx;
        let vy = yy[i] - my * my;
        let cxy = xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        n += 1;
    }
    Ok(total / n as f64)
}

/// Unnormalized 1D window; [`window_mean`] divides by the in-bounds weight.
pub(crate) fn ssim_window() -> Vec<f64> {
    let r = (SSIM_TAPS / 2) as f64;
    (0..SSIM_TAPS)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect()
}

/// Separable weighted local mean; weights falling outside the grid are
/// dropped and the remainder renormalized.
pub(crate) fn window_mean(data: &[f64], extents: [usize; 3], taps: &[f64]) -> Vec<f64> {
    let radius = (taps.len() / 2) as isize;
    let strides = [1, extents[0], extents[0] * extents[1]];
    let mut cur = data.to_vec();
    for axis in 0..3 {
        let n = extents[axis] as isize;
        let stride = strides[axis];
        let mut next = vec![0.0; cur.len()];
        for (i, out) in next.iter_mut().enumerate() {
            let pos = ((i / stride) % extents[axis]) as isize;
            let base = i - pos as usize * stride;
            let (mut acc, mut norm) = (0.0, 0.0);
            for (t, &w) in taps.iter().enumerate() {
                let p = pos + t as isize - radius;
                if (0..n).contains(&p) {
                    acc += w * cur[base + p as usize * stride];
                    norm += w;
                }
            }
            *out = acc / norm;
        }
        cur = next;
    }
    cur
}

/// Evaluation of an estimated profile against the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fwhm_true_mm: f64,
    pub fwhm_est_mm: f64,
    pub fwhm_error_mm: f64,
    pub profile_error: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub scale: usize,
    pub mask_fraction: f64,
    /// PSNR peak: maximum of the truth-degraded volume inside the mask.
    pub psnr_peak: f64,
    pub mask_voxels: usize,
    /// How both volumes were produced from the HR input.
    pub degradation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Degrades `hr` (blur along z and phase-0 downsampling by `scale`) with both
/// profiles and compares the results inside a head mask of the truth image.
pub fn evaluate(
    hr: &Volume,
    truth: &Profile,
    estimate: &Profile,
    scale: usize,
    mask_fraction: f64,
) -> Result<EvalReport> {
    let fwhm_true = fwhm(truth)?;
    let fwhm_est = fwhm(estimate)?;
    let p_err = profile_error(truth, estimate)?;
    let reference = degrade_volume(hr, truth, scale)?;
    let test = degrade_volume(hr, estimate, scale)?;
    if reference.extents() != test.extents() {
        return Err(Error::dim(
            "evaluate",
            format!(
                "profiles of {} and {} taps give different grids",
                truth.len(),
                estimate.len()
            ),
        ));
    }
    let mask = head_mask(&reference, mask_fraction)?;
    let psnr_db = psnr(&reference, &test, &mask)?;
    let ssim_v = ssim(&reference, &test, &mask)?;
    Ok(EvalReport {
        fwhm_true_mm: fwhm_true,
        fwhm_est_mm: fwhm_est,
        fwhm_error_mm: (fwhm_true - fwhm_est).abs(),
        profile_error: p_err,
        psnr_db,
        ssim: ssim_v,
        scale,
        mask_fraction,
        psnr_peak: masked(&reference, &mask).fold(f64::NEG_INFINITY, f64::max),
        mask_voxels: mask.count(),
        degradation: format!("z-blur then downsample x{scale} at phase 0"),
        truth_label: None,
        seed: None,
    })
}
