//! Metric values against analytic and hand-evaluated references.

use crate::common::rng;
use rand::Rng;
use sliceprofile::metrics::{fwhm, profile_error, psnr, ssim, ssim_with_range, PSNR_CAP_DB, SSIM_SIGMA};
use sliceprofile::simulate::{make_profile, ProfileKind, TruthProfileSpec};
use sliceprofile::volume::Mask;
use sliceprofile::{Error, Profile, Volume};

/// Fine sampling step for the dense Gaussians, in mm.
const DENSE_STEP_MM: f64 = 0.01;
const FWHM_TOL: f64 = 0.05;

fn dense_gaussian(fwhm_mm: f64) -> Profile {
    let sigma = fwhm_mm / (8.0 * 2f64.ln()).sqrt();
    let half = (5.0 * sigma / DENSE_STEP_MM).ceil() as usize;
    make_profile(&TruthProfileSpec::new(
        ProfileKind::Gaussian,
        fwhm_mm,
        DENSE_STEP_MM,
        2 * half + 1,
    ))
    .unwrap()
}

fn fwhm_of_dense_gaussians() {
    for f in [2.0, 3.0, 4.0, 5.0, 8.0, 9.0] {
        let measured = fwhm(&dense_gaussian(f)).unwrap();
        assert!((measured - f).abs() <= FWHM_TOL, "FWHM {f}: measured {measured}");
    }
}

fn fwhm_hand_cases() {
    let p = Profile::new(vec![0.0, 0.25, 0.5, 0.25, 0.0], 1.0).unwrap();
    assert_eq!(fwhm(&p).unwrap(), 2.0);
    let impulse = Profile::impulse(9, 1.0).unwrap();
    assert_eq!(fwhm(&impulse).unwrap(), 1.0);
    let monotone = Profile::normalized(vec![1.0, 2.0, 3.0, 4.0, 5.0], 1.0).unwrap();
    assert!(matches!(fwhm(&monotone), Err(Error::Measurement(_))));
}

fn fwhm_invariant_to_interior_shifts() {
    let base = vec![0.0, 0.0, 0.1, 0.3, 0.4, 0.15, 0.05, 0.0, 0.0, 0.0, 0.0];
    let reference = fwhm(&Profile::new(base.clone(), 1.0).unwrap()).unwrap();
    for shift in 1..3 {
        let mut shifted = base.clone();
        shifted.rotate_right(shift);
        let got = fwhm(&Profile::new(shifted, 1.0).unwrap()).unwrap();
        assert!((got - reference).abs() < 1e-12);
    }
}

fn profile_error_cases() {
    let a = Profile::new(vec![0.1, 0.2, 0.4, 0.2, 0.1], 1.0).unwrap();
    assert_eq!(profile_error(&a, &a).unwrap(), 0.0);
    let i0 = Profile::new(vec![0.0, 0.0, 1.0, 0.0, 0.0], 1.0).unwrap();
    let i1 = Profile::new(vec![0.0, 0.0, 0.0, 1.0, 0.0], 1.0).unwrap();
    assert_eq!(profile_error(&i0, &i1).unwrap(), 0.0);
    // [0.5, 0.5] vs [1, 0], zero-padded to odd length
    let half = Profile::new(vec![0.0, 0.5, 0.5], 1.0).unwrap();
    let left = Profile::new(vec![0.0, 1.0, 0.0], 1.0).unwrap();
    assert_eq!(profile_error(&half, &left).unwrap(), 1.0);
    let other = Profile::new(vec![0.1, 0.2, 0.4, 0.2, 0.1], 0.5).unwrap();
    assert!(matches!(profile_error(&a, &other), Err(Error::Argument(_))));
}

fn profile_error_is_symmetric() {
    let mut r = rng(5);
    for _ in 0..50 {
        let k1 = 2 * r.gen_range(1..8) + 1;
        let k2 = 2 * r.gen_range(1..8) + 1;
        let a = Profile::normalized((0..k1).map(|_| r.gen_range(0.0..1.0)).collect(), 1.0).unwrap();
        let b = Profile::normalized((0..k2).map(|_| r.gen_range(0.0..1.0)).collect(), 1.0).unwrap();
        let ab = profile_error(&a, &b).unwrap();
        let ba = profile_error(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12, "{ab} vs {ba}");
    }
}

fn vol(extents: [usize; 3], data: Vec<f64>) -> Volume {
    Volume::new(extents, [1.0; 3], data).unwrap()
}

fn psnr_cases() {
    let a = vol([2, 2, 1], vec![1.0, 0.5, 0.25, 0.0]);
    let full = Mask::full([2, 2, 1]);
    assert_eq!(psnr(&a, &a, &full).unwrap(), PSNR_CAP_DB);

    // R = 1, MSE = 0.01
    let b = a.map(|x| x + 0.1);
    assert!((psnr(&a, &b, &full).unwrap() - 20.0).abs() < 1e-9);

    // masked: voxels 0 and 1 only; R = 1, MSE = (0.2² + 0.1²) / 2 = 0.025
    let mask = Mask::new([2, 2, 1], vec![true, true, false, false]).unwrap();
    let c = vol([2, 2, 1], vec![0.8, 0.6, 9.0, -9.0]);
    let expected = 10.0 * (1.0f64 / 0.025).log10();
    assert!((psnr(&a, &c, &mask).unwrap() - expected).abs() < 1e-12);

    let near = a.map(|x| x * (1.0 + 1e-10));
    assert!(psnr(&a, &near, &full).unwrap() > 180.0);

    let empty = Mask::new([2, 2, 1], vec![false; 4]).unwrap();
    assert!(matches!(psnr(&a, &a, &empty), Err(Error::Argument(_))));
}

/// Local means by explicit 3D summation with a truncated, renormalized
/// Gaussian window.
fn direct_local_mean(v: &Volume, x: usize, y: usize, z: usize) -> f64 {
    let [nx, ny, nz] = v.extents();
    let g = |d: isize| (-(d * d) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    let (mut acc, mut norm) = (0.0, 0.0);
    for dz in -5isize..=5 {
        for dy in -5isize..=5 {
            for dx in -5isize..=5 {
                let (px, py, pz) = (x as isize + dx, y as isize + dy, z as isize + dz);
                if px < 0 || py < 0 || pz < 0 || px >= nx as isize || py >= ny as isize || pz >= nz as isize {
                    continue;
                }
                let w = g(dx) * g(dy) * g(dz);
                acc += w * v.get(px as usize, py as usize, pz as usize);
                norm += w;
            }
        }
    }
    acc / norm
}

fn ssim_shift_by_constant_matches_window_formula() {
    let mut r = rng(11);
    let a = vol([5, 5, 5], (0..125).map(|_| r.gen_range(0.0..1.0)).collect());
    let shift = 0.3;
    let b = a.map(|x| x + shift);
    let mask = Mask::full([5, 5, 5]);
    let range = a.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - a.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let c1 = (0.01 * range).powi(2);
    // equal variances and covariance = variance, so only luminance survives
    let mut total = 0.0;
    for z in 0..5 {
        for y in 0..5 {
            for x in 0..5 {
                let m = direct_local_mean(&a, x, y, z);
                let n = m + shift;
                total += (2.0 * m * n + c1) / (m * m + n * n + c1);
            }
        }
    }
    let expected = total / 125.0;
    let got = ssim(&a, &b, &mask).unwrap();
    assert!(got < 1.0);
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

fn ssim_identity_and_symmetry() {
    let mut r = rng(12);
    let a = vol([8, 7, 6], (0..336).map(|_| r.gen_range(0.0..1.0)).collect());
    let b = vol([8, 7, 6], (0..336).map(|_| r.gen_range(0.0..1.0)).collect());
    let mask = Mask::full([8, 7, 6]);
    assert!((ssim(&a, &a, &mask).unwrap() - 1.0).abs() < 1e-12);
    let ab = ssim_with_range(&a, &b, &mask, 1.0).unwrap();
    let ba = ssim_with_range(&b, &a, &mask, 1.0).unwrap();
    assert_eq!(ab, ba);
}

fn ssim_of_independent_noise_is_small() {
    for seed in 0..10 {
        let mut r = rng(100 + seed);
        let a = vol([32, 32, 32], (0..32 * 32 * 32).map(|_| r.gen_range(0.0..1.0)).collect());
        let b = vol([32, 32, 32], (0..32 * 32 * 32).map(|_| r.gen_range(0.0..1.0)).collect());
        let s = ssim(&a, &b, &Mask::full([32, 32, 32])).unwrap();
        assert!(s.abs() < 0.2, "seed {seed}: {s}");
    }
}

pub const CHECKS: &[(&str, fn())] = &[
    ("fwhm_of_dense_gaussians", fwhm_of_dense_gaussians),
    ("fwhm_hand_cases", fwhm_hand_cases),
    ("fwhm_invariant_to_interior_shifts", fwhm_invariant_to_interior_shifts),
    ("profile_error_cases", profile_error_cases),
    ("profile_error_is_symmetric", profile_error_is_symmetric),
    ("psnr_cases", psnr_cases),
    (
        "ssim_shift_by_constant_matches_window_formula",
        ssim_shift_by_constant_matches_window_formula,
    ),
    ("ssim_identity_and_symmetry", ssim_identity_and_symmetry),
    ("ssim_of_independent_noise_is_small", ssim_of_independent_noise_is_small),
];
