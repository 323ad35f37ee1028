//! Bit-exact reproducibility, in-process and through the command line,
//! including checkpoint save and resume.

use std::path::Path;

use sliceprofile::cli;
use sliceprofile::simulate::{degrade_volume, make_phantom, make_profile, ProfileKind, TruthProfileSpec};
use sliceprofile::trainer::{checkpoint_load, train, TrainConfig, Trainer};
use sliceprofile::volume::save_volume;
use sliceprofile::{Profile, Volume};

fn lr_volume() -> Volume {
    let hr = make_phantom(2, [56, 56, 64], 2.0).unwrap();
    let truth = make_profile(&TruthProfileSpec::new(ProfileKind::Gaussian, 3.0, 1.0, 21)).unwrap();
    degrade_volume(&hr, &truth, 2).unwrap()
}

fn config(iterations: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        batch_size: 4,
        seed,
        report_every: 5,
        ..TrainConfig::default()
    }
}

fn same_seed_same_profile() {
    let v = lr_volume();
    let (a, ha) = train(&v, &config(12, 3), &mut |_| {}).unwrap();
    let (b, hb) = train(&v, &config(12, 3), &mut |_| {}).unwrap();
    assert_eq!(a.taps(), b.taps());
    assert_eq!(ha, hb);
    let (c, _) = train(&v, &config(12, 4), &mut |_| {}).unwrap();
    assert_ne!(a.taps(), c.taps());
}

fn resumed_run_matches_straight_run() {
    let v = lr_volume();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.ckpt");

    let (straight, straight_history) = train(&v, &config(20, 17), &mut |_| {}).unwrap();

    let mut first = Trainer::new(&v, &config(10, 17)).unwrap();
    first.run_to(10, &mut |_| {}).unwrap();
    first.save_checkpoint(&path).unwrap();
    drop(first);

    let mut resumed = Trainer::with_state(&v, checkpoint_load(&path).unwrap()).unwrap();
    resumed.run_to(20, &mut |_| {}).unwrap();

    assert_eq!(resumed.profile().taps(), straight.taps());
    assert_eq!(resumed.state().history, straight_history);
}

fn estimate(input: &Path, out: &Path, iters: usize, checkpoint: Option<&Path>) {
    let iters = iters.to_string();
    let mut args = vec![
        "sliceprofile",
        "estimate",
        "--in",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--iters",
        &iters,
        "--batch",
        "4",
        "--seed",
        "11",
    ];
    if let Some(c) = checkpoint {
        args.extend(["--checkpoint", c.to_str().unwrap()]);
    }
    assert_eq!(cli::run(args), cli::EXIT_OK);
}

fn command_line_resume_matches_straight_run() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("lr.raw");
    save_volume(&lr_volume(), &input).unwrap();

    let straight = dir.path().join("straight.json");
    estimate(&input, &straight, 16, None);

    let ckpt = dir.path().join("state.ckpt");
    let partial = dir.path().join("partial.json");
    let resumed = dir.path().join("resumed.json");
    estimate(&input, &partial, 8, Some(&ckpt));
    estimate(&input, &resumed, 16, Some(&ckpt));

    let a = Profile::load(&straight).unwrap();
    let b = Profile::load(&resumed).unwrap();
    assert_eq!(a.taps(), b.taps());
    assert_eq!(std::fs::read(&straight).unwrap(), std::fs::read(&resumed).unwrap());
}

pub const CHECKS: &[(&str, fn())] = &[
    ("same_seed_same_profile", same_seed_same_profile),
    ("resumed_run_matches_straight_run", resumed_run_matches_straight_run),
    (
        "command_line_resume_matches_straight_run",
        command_line_resume_matches_straight_run,
    ),
];
