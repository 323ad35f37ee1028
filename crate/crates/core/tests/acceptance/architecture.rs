//! Structural guarantees of the generator and discriminator.

use crate::common::rng;
use rand::Rng;
use sliceprofile::gan::{DiscriminatorConfig, DiscriminatorParams, GeneratorConfig, GeneratorParams};

fn discriminator_sees_seven_columns_of_its_own_row() {
    let (rows, cols) = (4, 20);
    for seed in 0..20 {
        let mut r = rng(seed);
        let d = DiscriminatorParams::init(&DiscriminatorConfig::default(), &mut r).unwrap();
        assert_eq!(d.receptive_field(), 7);
        let base: Vec<f64> = (0..rows * cols).map(|_| r.gen_range(0.0..1.0)).collect();
        let out = d.discriminate(&base, rows, cols).unwrap();
        assert_eq!(out.shape(), &[rows, cols - 6]);
        assert!(out.data().iter().all(|&p| p > 0.0 && p < 1.0));
        for pr in 0..rows {
            for pc in 0..cols {
                let mut probe = base.clone();
                probe[pr * cols + pc] += 0.5;
                let moved = d.discriminate(&probe, rows, cols).unwrap();
                for orow in 0..rows {
                    for ocol in 0..cols - 6 {
                        let changed = moved.data()[orow * (cols - 6) + ocol] != out.data()[orow * (cols - 6) + ocol];
                        let visible = orow == pr && ocol <= pc && pc <= ocol + 6;
                        assert!(
                            !changed || visible,
                            "seed {seed}: input ({pr},{pc}) reached output ({orow},{ocol})"
                        );
                    }
                }
                // every column of the window is live for a generic network
                for ocol in pc.saturating_sub(6)..=pc.min(cols - 7) {
                    let i = pr * (cols - 6) + ocol;
                    assert_ne!(
                        moved.data()[i],
                        out.data()[i],
                        "seed {seed}: ({pr},{pc}) missed column {ocol}"
                    );
                }
            }
        }
    }
}

fn generator_profile_is_a_distribution_for_any_parameters() {
    let cfg = GeneratorConfig::default();
    let mut r = rng(7);
    for draw in 0..1000 {
        let mut g = GeneratorParams::random(&cfg, &mut r);
        let gain = 10f64.powf(r.gen_range(-2.0..2.0));
        for t in g.learnable_mut() {
            t.scale(gain);
        }
        let p = g.profile(1.0).unwrap();
        assert_eq!(p.len(), cfg.taps);
        assert!(p.taps().iter().all(|&t| t >= 0.0 && t.is_finite()), "draw {draw}");
        assert!((p.taps().iter().sum::<f64>() - 1.0).abs() <= 1e-9, "draw {draw}");
    }
}

fn initialization_peaks_at_the_centre() {
    let cfg = GeneratorConfig::default();
    for seed in 0..10 {
        let g = GeneratorParams::init(&cfg, &mut rng(seed)).unwrap();
        let p = g.profile(1.0).unwrap();
        assert_eq!(p.argmax(), (cfg.taps - 1) / 2);
        assert!(
            p.taps()[p.argmax()] >= 0.5,
            "seed {seed}: centre {}",
            p.taps()[p.argmax()]
        );
    }
}

pub const CHECKS: &[(&str, fn())] = &[
    (
        "discriminator_sees_seven_columns_of_its_own_row",
        discriminator_sees_seven_columns_of_its_own_row,
    ),
    (
        "generator_profile_is_a_distribution_for_any_parameters",
        generator_profile_is_a_distribution_for_any_parameters,
    ),
    ("initialization_peaks_at_the_centre", initialization_peaks_at_the_centre),
];
