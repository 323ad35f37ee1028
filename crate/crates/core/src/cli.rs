//! Command-line interface. [`run`] parses arguments, dispatches, and maps
//! failures onto exit codes: 0 success, 2 bad input data, 3 numerical abort,
//! 64 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::gan::Profile;
use crate::metrics::{evaluate, fwhm, EvalReport};
use crate::simulate::{degrade_volume, make_phantom, make_profile, ProfileKind, TruthProfileSpec, MIN_PHANTOM_EXTENT};
use crate::trainer::{history_csv, trainer_from_checkpoint, TrainConfig, Trainer};
use crate::volume::{load_volume, save_volume, Volume};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable supplying the seed when `--seed` is absent.
pub const SEED_ENV: &str = "RNG_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "sliceprofile",
    version,
    about = "Estimate MRI slice profiles from a single anisotropic volume"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the relative slice profile of a volume.
    Estimate(EstimateArgs),
    /// Blur and downsample an isotropic volume along z.
    Simulate(SimulateArgs),
    /// Compare an estimated profile with the truth.
    Evaluate(EvaluateArgs),
    /// Estimate repeatedly and report the FWHM.
    Measure(MeasureArgs),
    /// Write a procedural isotropic phantom.
    Phantom(PhantomArgs),
}

#[derive(Debug, Args, Clone)]
struct TrainArgs {
    /// Training iterations.
    #[arg(long, default_value_t = 15_000)]
    iters: usize,
    /// Patch pairs per iteration.
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Integer through-plane / in-plane spacing ratio; read from the header by default.
    #[arg(long)]
    scale: Option<usize>,
    /// Random seed (falls back to $RNG_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Profile length (odd).
    #[arg(long, default_value_t = 21)]
    taps: usize,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Profile JSON; a CSV copy is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainArgs,
    /// Resume from / save training state to this file.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Loss history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    /// SVG plot of the profile taps.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Gaussian,
    Rect,
}

impl From<KindArg> for ProfileKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Gaussian => ProfileKind::Gaussian,
            KindArg::Rect => ProfileKind::Rect,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Profile FWHM in mm.
    #[arg(long)]
    fwhm: f64,
    #[arg(long)]
    scale: usize,
    #[arg(long)]
    out: PathBuf,
    /// Truth profile JSON.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 21)]
    taps: usize,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, required_unless_present = "batch")]
    truth: Option<PathBuf>,
    #[arg(long, required_unless_present = "batch")]
    est: Option<PathBuf>,
    /// Isotropic HR volume both profiles are applied to.
    #[arg(long)]
    hr: PathBuf,
    #[arg(long)]
    scale: usize,
    #[arg(long = "mask-frac", default_value_t = 0.1)]
    mask_frac: f64,
    /// Report JSON, or the summary CSV in batch mode.
    #[arg(long)]
    out: PathBuf,
    /// Directory of `<label>.truth.json` / `<label>.est.json` pairs.
    #[arg(long, conflicts_with_all = ["truth", "est"])]
    batch: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MeasureArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainArgs,
    /// Number of runs with consecutive seeds.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
}

#[derive(Debug, Args)]
struct PhantomArgs {
    /// Edge length in voxels.
    #[arg(long)]
    size: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Smoothing scale of the underlying noise, in voxels.
    #[arg(long = "corr-len", default_value_t = 3.0)]
    corr_len: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Outcome of a failed command: exit code plus message.
struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFinite { .. } => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        Failure(code, e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure(EXIT_USAGE, msg.into())
}

type CmdResult = std::result::Result<(), Failure>;

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Measure(a) => cmd_measure(a),
        Command::Phantom(a) => cmd_phantom(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> std::result::Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn train_config(a: &TrainArgs, seed: u64) -> std::result::Result<TrainConfig, Failure> {
    if a.batch == 0 {
        return Err(usage("--batch must be at least 1"));
    }
    if a.scale == Some(0) {
        return Err(usage("--scale must be at least 1"));
    }
    if a.taps < 5 || a.taps % 2 == 0 {
        return Err(usage("--taps must be odd and at least 5"));
    }
    Ok(TrainConfig {
        iterations: a.iters,
        batch_size: a.batch,
        scale: a.scale,
        taps: a.taps,
        seed,
        ..TrainConfig::default()
    })
}

fn write(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn cmd_estimate(a: EstimateArgs) -> CmdResult {
    let seed = resolve_seed(a.train.seed)?;
    let config = train_config(&a.train, seed)?;
    let volume = load_volume(&a.input)?;
    let mut trainer = match &a.checkpoint {
        Some(path) => trainer_from_checkpoint(&volume, &config, path)?,
        None => Trainer::new(&volume, &config)?,
    };
    let outcome = match &a.checkpoint {
        Some(path) => run_with_checkpoints(&mut trainer, config.iterations, config.report_every, path),
        None => trainer.run_to(config.iterations, &mut |_| {}),
    };
    if let (Some(path), Some(_)) = (&a.history, outcome.as_ref().err()) {
        // keep the partial history for diagnosing an abort
        write(path, &history_csv(&trainer.state().history))?;
    }
    outcome?;
    let profile = trainer.profile();
    write(&a.out, &profile.to_json())?;
    write(&a.out.with_extension("csv"), &profile.to_csv())?;
    if let Some(path) = &a.history {
        write(path, &history_csv(&trainer.state().history))?;
    }
    if let Some(path) = &a.svg {
        write(path, &profile_svg(profile))?;
    }
    match fwhm(profile) {
        Ok(f) => println!("FWHM {f:.4} mm"),
        Err(e) => println!("FWHM unavailable: {e}"),
    }
    Ok(())
}

/// Trains in chunks of `every` iterations, saving state after each chunk.
fn run_with_checkpoints(trainer: &mut Trainer, iterations: usize, every: usize, path: &Path) -> crate::Result<()> {
    let every = every.max(1);
    while trainer.state().iteration < iterations {
        let next = ((trainer.state().iteration / every + 1) * every).min(iterations);
        trainer.run_to(next, &mut |_| {})?;
        trainer.save_checkpoint(path)?;
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    if a.scale == 0 {
        return Err(usage("--scale must be at least 1"));
    }
    if !(a.fwhm > 0.0) {
        return Err(usage("--fwhm must be positive"));
    }
    let hr = load_volume(&a.input)?;
    let spec = TruthProfileSpec::new(a.kind.into(), a.fwhm, hr.spacing()[2], a.taps);
    let truth = make_profile(&spec)?;
    let lr = degrade_volume(&hr, &truth, a.scale)?;
    save_volume(&lr, &a.out)?;
    truth.save(&a.truth)?;
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> CmdResult {
    if !(a.mask_frac > 0.0 && a.mask_frac < 1.0) {
        return Err(usage("--mask-frac must lie in (0, 1)"));
    }
    if a.scale == 0 {
        return Err(usage("--scale must be at least 1"));
    }
    let hr = load_volume(&a.hr)?;
    if let Some(dir) = &a.batch {
        let pairs = batch_pairs(dir)?;
        if pairs.is_empty() {
            return Err(Failure(
                EXIT_DATA,
                format!("no <label>.truth.json / <label>.est.json pairs in {}", dir.display()),
            ));
        }
        let mut reports = Vec::with_capacity(pairs.len());
        for (label, truth, est) in pairs {
            let mut r = evaluate(
                &hr,
                &Profile::load(&truth)?,
                &Profile::load(&est)?,
                a.scale,
                a.mask_frac,
            )?;
            r.truth_label = Some(label);
            reports.push(r);
        }
        return write(&a.out, &table_csv(&reports));
    }
    let (truth, est) = (a.truth.expect("required by clap"), a.est.expect("required by clap"));
    let report = evaluate(
        &hr,
        &Profile::load(&truth)?,
        &Profile::load(&est)?,
        a.scale,
        a.mask_frac,
    )?;
    write(&a.out, &report.to_json())
}

fn batch_pairs(dir: &Path) -> std::result::Result<Vec<(String, PathBuf, PathBuf)>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut pairs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(label) = name.strip_suffix(".truth.json") {
            let est = dir.join(format!("{label}.est.json"));
            if est.exists() {
                pairs.push((label.to_string(), path.clone(), est));
            }
        }
    }
    pairs.sort();
    Ok(pairs)
}

/// One row per metric, one column per evaluated pair.
pub fn table_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("metric");
    for (i, r) in reports.iter().enumerate() {
        let label = r.truth_label.clone().unwrap_or_else(|| format!("run{i}"));
        write!(out, ",{label}").unwrap();
    }
    out.push('\n');
    let rows: [(&str, fn(&EvalReport) -> f64); 4] = [
        ("fwhm_error_mm", |r| r.fwhm_error_mm),
        ("profile_error", |r| r.profile_error),
        ("psnr_db", |r| r.psnr_db),
        ("ssim", |r| r.ssim),
    ];
    for (name, get) in rows {
        out.push_str(name);
        for r in reports {
            write!(out, ",{}", get(r)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Summary written by `measure`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub spacing_mm: f64,
    pub scale: usize,
    pub seeds: Vec<u64>,
    pub fwhm_mm: Vec<f64>,
    pub mean_mm: f64,
    /// Sample standard deviation; zero for a single run.
    pub sd_mm: f64,
    pub mean_vox: f64,
    pub sd_vox: f64,
}

fn cmd_measure(a: MeasureArgs) -> CmdResult {
    if a.repeat == 0 {
        return Err(usage("--repeat must be at least 1"));
    }
    let seed = resolve_seed(a.train.seed)?;
    let base = train_config(&a.train, seed)?;
    let volume = load_volume(&a.input)?;
    let report = measure(&volume, &base, a.repeat)?;
    println!(
        "FWHM {:.4} ± {:.4} mm over {} run(s)",
        report.mean_mm, report.sd_mm, a.repeat
    );
    write(
        &a.out,
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )
}

/// Trains `repeat` times with seeds `base.seed, base.seed + 1, …` and
/// summarizes the FWHM of the results.
pub fn measure(volume: &Volume, base: &TrainConfig, repeat: usize) -> crate::Result<MeasureReport> {
    measure_profiles(volume, base, repeat).map(|(report, _)| report)
}

/// [`measure`], also returning the EMA profile of each run.
pub fn measure_profiles(
    volume: &Volume,
    base: &TrainConfig,
    repeat: usize,
) -> crate::Result<(MeasureReport, Vec<Profile>)> {
    let mut seeds = Vec::with_capacity(repeat);
    let mut values = Vec::with_capacity(repeat);
    let mut profiles = Vec::with_capacity(repeat);
    let mut scale = 1;
    for i in 0..repeat {
        let cfg = TrainConfig {
            seed: base.seed.wrapping_add(i as u64),
            ..base.clone()
        };
        let mut trainer = Trainer::new(volume, &cfg)?;
        scale = trainer.state().scale;
        trainer.run_to(cfg.iterations, &mut |_| {})?;
        seeds.push(cfg.seed);
        values.push(fwhm(trainer.profile())?);
        profiles.push(trainer.profile().clone());
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let spacing = volume.spacing()[0];
    let report = MeasureReport {
        spacing_mm: spacing,
        scale,
        seeds,
        fwhm_mm: values,
        mean_mm: mean,
        sd_mm: sd,
        mean_vox: mean / spacing,
        sd_vox: sd / spacing,
    };
    Ok((report, profiles))
}

fn cmd_phantom(a: PhantomArgs) -> CmdResult {
    if a.size < MIN_PHANTOM_EXTENT {
        return Err(usage(format!("--size must be at least {MIN_PHANTOM_EXTENT}")));
    }
    if !(a.corr_len > 0.0) {
        return Err(usage("--corr-len must be positive"));
    }
    let seed = resolve_seed(a.seed)?;
    let v = make_phantom(seed, [a.size; 3], a.corr_len)?;
    save_volume(&v, &a.out)?;
    Ok(())
}

/// Polyline plot of the taps against their offset in mm.
pub fn profile_svg(profile: &Profile) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const M: f64 = 40.0;
    let taps = profile.taps();
    let c = profile.center() as f64;
    let half = c.max(1.0) * profile.spacing_mm();
    let peak = taps.iter().copied().fold(0.0, f64::max).max(1e-12);
    let x = |i: usize| M + (W - 2.0 * M) * (i as f64 / (taps.len() - 1).max(1) as f64);
    let y = |v: f64| H - M - (H - 2.0 * M) * v / peak;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<path d="M{M} {} H{} M{M} {} V{}" stroke="black" fill="none"/>"#,
        H - M,
        W - M,
        H - M,
        M
    )
    .unwrap();
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let px = M + (W - 2.0 * M) * t;
        let py = H - M - (H - 2.0 * M) * t;
        writeln!(
            s,
            r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" font-size="10" text-anchor="middle">{:.1}</text>"#,
            H - M,
            H - M + 4.0,
            H - M + 16.0,
            -half + 2.0 * half * t
        )
        .unwrap();
        writeln!(
            s,
            r#"<line x1="{}" y1="{py}" x2="{M}" y2="{py}" stroke="black"/><text x="{}" y="{}" font-size="10" text-anchor="end">{:.2}</text>"#,
            M - 4.0,
            M - 6.0,
            py + 3.0,
            peak * t
        )
        .unwrap();
    }
    let points: Vec<String> = taps
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
        .collect();
    writeln!(
        s,
        r#"<polyline points="{}" stroke="steelblue" stroke-width="2" fill="none"/>"#,
        points.join(" ")
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">offset (mm)</text>"#,
        W / 2.0,
        H - 8.0
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}
