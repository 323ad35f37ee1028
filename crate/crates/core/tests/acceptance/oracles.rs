//! Fast kernels against direct nested-loop evaluation.

use crate::common::{random_tensor, rng};
use proptest::prelude::*;
use rand::Rng;
use sliceprofile::gan::degrade;
use sliceprofile::simulate::degrade_volume;
use sliceprofile::tensorcore::{conv1d, conv1d_channels_last, Tensor};
use sliceprofile::volume::{Patch, Plane};
use sliceprofile::{Profile, Volume};

const ORACLE_TOL: f64 = 1e-12;

fn naive_conv_valid(x: &Tensor, w: &Tensor) -> Vec<f64> {
    let [b, c, l] = [x.shape()[0], x.shape()[1], x.shape()[2]];
    let [o, _, k] = [w.shape()[0], w.shape()[1], w.shape()[2]];
    let lo = l - k + 1;
    let mut out = vec![0.0; b * o * lo];
    for bi in 0..b {
        for oi in 0..o {
            for i in 0..lo {
                let mut acc = 0.0;
                for ci in 0..c {
                    for j in 0..k {
                        acc += x.data()[(bi * c + ci) * l + i + j] * w.data()[(oi * c + ci) * k + j];
                    }
                }
                out[(bi * o + oi) * lo + i] = acc;
            }
        }
    }
    out
}

fn random_profile(r: &mut impl Rng, k: usize) -> Profile {
    Profile::normalized((0..k).map(|_| r.gen_range(0.01..1.0)).collect(), 1.0).unwrap()
}

fn conv1d_valid_matches_nested_loops() {
    for seed in 0..200 {
        let mut r = rng(seed);
        let l = r.gen_range(1..=64);
        let k = r.gen_range(1..=l.min(21));
        let (b, c, o) = (r.gen_range(1..4), r.gen_range(1..5), r.gen_range(1..5));
        let x = random_tensor(&[b, c, l], &mut r);
        let w = random_tensor(&[o, c, k], &mut r);
        let got = conv1d(&x, &w, 0).unwrap();
        let expected = naive_conv_valid(&x, &w);
        assert_eq!(got.shape(), &[b, o, l - k + 1]);
        for (g, e) in got.data().iter().zip(&expected) {
            assert!((g - e).abs() <= ORACLE_TOL, "seed {seed}: {g} vs {e}");
        }
    }
}

fn channels_last_matches_nested_loops() {
    for seed in 0..200 {
        let mut r = rng(1000 + seed);
        let l = r.gen_range(1..=64);
        let k = r.gen_range(1..=l.min(7));
        let (b, c, o) = (r.gen_range(1..4), r.gen_range(1..5), r.gen_range(1..5));
        let x = random_tensor(&[b, c, l], &mut r);
        let w = random_tensor(&[o, c, k], &mut r);
        let mut xl = vec![0.0; x.len()];
        for bi in 0..b {
            for ci in 0..c {
                for i in 0..l {
                    xl[(bi * l + i) * c + ci] = x.data()[(bi * c + ci) * l + i];
                }
            }
        }
        let got = conv1d_channels_last(&Tensor::new(&[b, l, c], xl).unwrap(), &w).unwrap();
        let expected = naive_conv_valid(&x, &w);
        let lo = l - k + 1;
        for bi in 0..b {
            for oi in 0..o {
                for i in 0..lo {
                    let g = got.data()[(bi * lo + i) * o + oi];
                    let e = expected[(bi * o + oi) * lo + i];
                    assert!((g - e).abs() <= ORACLE_TOL, "seed {seed}: {g} vs {e}");
                }
            }
        }
    }
}

fn degrade_matches_nested_loops() {
    for seed in 0..200 {
        let mut r = rng(2000 + seed);
        let scale = r.gen_range(1..=4);
        let k = 2 * r.gen_range(0..6) + 1;
        let target = r.gen_range(1..=(64 - k + 1) / scale);
        let cols = target * scale + k - 1;
        let rows = r.gen_range(1..5);
        let phase = r.gen_range(0..scale);
        let values: Vec<f64> = (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect();
        let patch = Patch::new(rows, cols, values, Plane::Xz).unwrap();
        let profile = random_profile(&mut r, k);
        let got = degrade(&patch, &profile, scale, phase).unwrap();
        assert_eq!((got.rows, got.cols), (rows, target));
        for row in 0..rows {
            for i in 0..target {
                let start = phase + i * scale;
                let e: f64 = (0..k).map(|j| patch.at(row, start + j) * profile.taps()[j]).sum();
                assert!((got.at(row, i) - e).abs() <= ORACLE_TOL, "seed {seed}");
            }
        }
    }
}

fn degrade_volume_matches_nested_loops() {
    for seed in 0..40 {
        let mut r = rng(3000 + seed);
        let nz = r.gen_range(1..=64);
        let k = 2 * r.gen_range(0..=(nz - 1).min(20) / 2) + 1;
        let scale = r.gen_range(1..=4);
        let (nx, ny) = (r.gen_range(1..5), r.gen_range(1..5));
        let data: Vec<f64> = (0..nx * ny * nz).map(|_| r.gen_range(0.0..1.0)).collect();
        let v = Volume::new([nx, ny, nz], [1.0, 1.0, 1.0], data).unwrap();
        let profile = random_profile(&mut r, k);
        let out = degrade_volume(&v, &profile, scale).unwrap();
        let out_z = (nz - k) / scale + 1;
        assert_eq!(out.extents(), [nx, ny, out_z]);
        assert_eq!(out.spacing()[2], scale as f64);
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..out_z {
                    let e: f64 = (0..k).map(|j| v.get(x, y, z * scale + j) * profile.taps()[j]).sum();
                    assert!((out.get(x, y, z) - e).abs() <= ORACLE_TOL, "seed {seed}");
                }
            }
        }
    }
}

proptest! {
    fn degrade_preserves_constant_rows(value in -10.0f64..10.0, scale in 1usize..4, k in 0usize..5) {
        let k = 2 * k + 1;
        let cols = 4 * scale + k - 1;
        let patch = Patch::new(2, cols, vec![value; 2 * cols], Plane::Yz).unwrap();
        let profile = Profile::normalized((1..=k).map(|i| i as f64).collect(), 1.0).unwrap();
        let out = degrade(&patch, &profile, scale, scale - 1).unwrap();
        for v in out.values {
            prop_assert!((v - value).abs() <= 1e-12 * value.abs().max(1.0));
        }
    }

    fn degrade_is_linear_in_the_patch(seed in 0u64..1000, alpha in -3.0f64..3.0) {
        let mut r = rng(seed);
        let cols = 8 * 2 + 4;
        let a: Vec<f64> = (0..cols).map(|_| r.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..cols).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
        let profile = random_profile(&mut r, 5);
        let run = |v: Vec<f64>| degrade(&Patch::new(1, cols, v, Plane::Xz).unwrap(), &profile, 2, 1).unwrap().values;
        let (da, db, dm) = (run(a), run(b), run(mix));
        for i in 0..dm.len() {
            prop_assert!((dm[i] - (alpha * da[i] + db[i])).abs() <= 1e-12);
        }
    }
}

pub const CHECKS: &[(&str, fn())] = &[
    ("conv1d_valid_matches_nested_loops", conv1d_valid_matches_nested_loops),
    ("channels_last_matches_nested_loops", channels_last_matches_nested_loops),
    ("degrade_matches_nested_loops", degrade_matches_nested_loops),
    (
        "degrade_volume_matches_nested_loops",
        degrade_volume_matches_nested_loops,
    ),
    ("degrade_preserves_constant_rows", degrade_preserves_constant_rows),
    ("degrade_is_linear_in_the_patch", degrade_is_linear_in_the_patch),
];
