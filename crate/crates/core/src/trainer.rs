//! Alternating discriminator / generator optimization with an EMA of the
//! estimated profile, plus binary checkpoints.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::{
    adv_loss_discriminator, adv_loss_generator, boundary_loss, centroid_loss, degrade_batch, ema_update, stack_patches,
    DiscriminatorConfig, DiscriminatorParams, GeneratorConfig, GeneratorParams, Profile, SnConv,
};
use crate::metrics::fwhm;
use crate::tensorcore::{adam_step, clip_grad_norm, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::volume::{draw_patch, gradient_weights, SampleWeights, Volume};

/// Largest accepted distance of `s_z / s_x` from an integer.
pub const SCALE_TOLERANCE: f64 = 1e-3;

const MAGIC: &[u8; 8] = b"SPCKPT\r\n";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    /// Rows of every patch, and columns after degradation.
    pub patch_lr_size: usize,
    /// Integer `s_z / s_x`; derived from the volume spacing when `None`.
    pub scale: Option<usize>,
    pub lambda_centroid: f64,
    pub lambda_boundary: f64,
    /// Generator-only L2 weight decay.
    pub weight_decay: f64,
    pub ema_beta: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Generator-only gradient clipping norm.
    pub clip_norm: f64,
    pub taps: usize,
    /// Value the volume's 99th percentile is mapped to before training.
    pub intensity_scale: f64,
    pub seed: u64,
    pub report_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 15_000,
            batch_size: 64,
            patch_lr_size: 16,
            scale: None,
            lambda_centroid: 1.0,
            lambda_boundary: 10.0,
            weight_decay: 0.05,
            ema_beta: 0.99,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 1.0,
            taps: 21,
            intensity_scale: 10.0,
            seed: 0,
            report_every: 100,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.patch_lr_size == 0 {
            return bad("patch size must be at least 1");
        }
        if self.taps < 5 || self.taps % 2 == 0 {
            return bad("profile length must be odd and at least 5");
        }
        if self.scale == Some(0) {
            return bad("scale must be at least 1");
        }
        if !(0.0..1.0).contains(&self.ema_beta) {
            return bad("EMA beta must lie in [0, 1)");
        }
        if !(self.intensity_scale > 0.0 && self.intensity_scale.is_finite()) {
            return bad("intensity scale must be positive and finite");
        }
        if !(self.clip_norm > 0.0) || !(self.lr > 0.0) {
            return bad("learning rate and clipping norm must be positive");
        }
        Ok(())
    }

    fn adam(&self, weight_decay: f64) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay,
        }
    }

    /// Equal in everything that shapes a trajectory except its length.
    fn resumable_as(&self, other: &TrainConfig) -> bool {
        let strip = |c: &TrainConfig| TrainConfig {
            iterations: 0,
            report_every: 0,
            ..c.clone()
        };
        strip(self) == strip(other)
    }
}

/// Integer scale for training: the explicit request, or `s_z / s_x` rounded.
pub fn resolve_scale(volume: &Volume, requested: Option<usize>) -> Result<usize> {
    let scale = match requested {
        Some(0) => return Err(Error::Config("scale must be at least 1".into())),
        Some(s) => s,
        None => {
            let ratio = volume.anisotropy()?;
            let rounded = ratio.round();
            if (ratio - rounded).abs() > SCALE_TOLERANCE {
                return Err(Error::Config(format!(
                    "spacing ratio s_z/s_x = {ratio} is not an integer; pass an explicit scale"
                )));
            }
            rounded.max(1.0) as usize
        }
    };
    if scale == 1 {
        log::warn!("scale 1: the volume looks isotropic, the estimate will be close to an impulse");
    }
    Ok(scale)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    /// Discriminator objective.
    pub loss_d: f64,
    /// Adversarial term of the generator objective.
    pub loss_adv: f64,
    pub loss_centroid: f64,
    pub loss_boundary: f64,
    pub loss_total: f64,
    /// FWHM of the EMA profile after this iteration; NaN when unmeasurable.
    pub fwhm_mm: f64,
}

pub const HISTORY_HEADER: &str = "iteration,loss_d,loss_adv,loss_centroid,loss_boundary,loss_total,fwhm_mm";

pub fn history_csv(history: &[HistoryEntry]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            h.iteration, h.loss_d, h.loss_adv, h.loss_centroid, h.loss_boundary, h.loss_total, h.fwhm_mm
        ));
    }
    out
}

/// Everything needed to continue a run bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub scale: usize,
    pub spacing_mm: f64,
    /// Completed iterations.
    pub iteration: usize,
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
    pub gen_adam: Vec<AdamState>,
    pub disc_adam: Vec<AdamState>,
    pub ema: Profile,
    pub history: Vec<HistoryEntry>,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn init(config: &TrainConfig, scale: usize, spacing_mm: f64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let gcfg = GeneratorConfig {
            taps: config.taps,
            ..GeneratorConfig::default()
        };
        let generator = GeneratorParams::init(&gcfg, &mut rng)?;
        let discriminator = DiscriminatorParams::init(&DiscriminatorConfig::default(), &mut rng)?;
        let gen_adam = generator.learnable().into_iter().map(AdamState::new).collect();
        let disc_adam = discriminator.learnable().into_iter().map(AdamState::new).collect();
        let ema = generator.profile(spacing_mm)?;
        Ok(Self {
            config: config.clone(),
            scale,
            spacing_mm,
            iteration: 0,
            generator,
            discriminator,
            gen_adam,
            disc_adam,
            ema,
            history: Vec::new(),
            rng,
        })
    }
}

/// A training run over one (normalized) volume.
pub struct Trainer {
    volume: Volume,
    weights: SampleWeights,
    state: TrainState,
}

impl Trainer {
    pub fn new(volume: &Volume, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let scale = resolve_scale(volume, config.scale)?;
        let state = TrainState::init(config, scale, volume.spacing()[0])?;
        Self::with_state(volume, state)
    }

    /// Continues from a saved state. The state's scale and spacing must match
    /// the volume.
    pub fn with_state(volume: &Volume, state: TrainState) -> Result<Self> {
        state.config.validate()?;
        let spacing = volume.spacing()[0];
        if state.spacing_mm != spacing {
            return Err(Error::Incompatible(format!(
                "state was trained at {} mm in-plane spacing, volume has {spacing} mm",
                state.spacing_mm
            )));
        }
        let gain = state.config.intensity_scale;
        let volume = volume.normalized().map(|x| gain * x);
        let cols = state.config.patch_lr_size * state.scale + state.config.taps - 1;
        let weights = gradient_weights(&volume, state.config.patch_lr_size, cols)?;
        Ok(Self { volume, weights, state })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn profile(&self) -> &Profile {
        &self.state.ema
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint_save(&self.state, path)
    }

    /// Runs until `iterations` have completed in total, calling `progress`
    /// every `report_every` iterations and after the last one.
    pub fn run_to(&mut self, iterations: usize, progress: &mut dyn FnMut(&HistoryEntry)) -> Result<()> {
        let every = self.state.config.report_every.max(1);
        while self.state.iteration < iterations {
            let entry = self.step()?;
            if entry.iteration % every == 0 || entry.iteration == iterations {
                log::info!(
                    "iter {:>6}  L_adv(G) {:.4}  L(D) {:.4}  L_c {:.3e}  L_b {:.3e}  FWHM {:.3} mm",
                    entry.iteration,
                    entry.loss_adv,
                    entry.loss_d,
                    entry.loss_centroid,
                    entry.loss_boundary,
                    entry.fwhm_mm
                );
                progress(&entry);
            }
        }
        Ok(())
    }

    /// One discriminator step followed by one generator step and the EMA
    /// update.
    pub fn step(&mut self) -> Result<HistoryEntry> {
        let iteration = self.state.iteration + 1;
        let pair = self.draw_pair()?;
        let loss_d = self.discriminator_step(&pair, iteration)?;
        let g = self.generator_step(&pair, iteration, loss_d)?;

        let st = &mut self.state;
        let current = st.generator.profile(st.spacing_mm)?;
        st.ema = ema_update(&st.ema, &current, st.config.ema_beta)?;
        st.iteration = iteration;
        let entry = HistoryEntry {
            iteration,
            loss_d,
            loss_adv: g.adv,
            loss_centroid: g.centroid,
            loss_boundary: g.boundary,
            loss_total: g.total,
            fwhm_mm: fwhm(&st.ema).unwrap_or(f64::NAN),
        };
        st.history.push(entry);
        Ok(entry)
    }

    /// Draws the two independent batches `I₁`, `I₂` with their phases.
    pub fn draw_pair(&mut self) -> Result<PatchPair> {
        let b = self.state.config.batch_size;
        let scale = self.state.scale;
        let (volume, weights, rng) = (&self.volume, &self.weights, &mut self.state.rng);
        let mut draw = || -> Result<(Tensor, Vec<usize>)> {
            let patches: Vec<_> = (0..b).map(|_| draw_patch(volume, weights, rng)).collect();
            let phases = (0..b).map(|_| rng.gen_range(0..scale)).collect();
            Ok((stack_patches(&patches)?, phases))
        };
        let first = draw()?;
        let second = draw()?;
        Ok(PatchPair { first, second })
    }

    /// Adam step on the discriminator loss with the generator held constant.
    /// Returns `L(D)`.
    pub fn discriminator_step(&mut self, pair: &PatchPair, iteration: usize) -> Result<f64> {
        let st = &mut self.state;
        let mut tape = Tape::new();
        let g = st.generator.forward(&mut tape, false)?;
        let dv = st.discriminator.register(&mut tape, true);
        let (d_real, d_fake) =
            discriminate_pair(&mut tape, &mut st.discriminator, &dv, g.profile, pair, st.scale, true)?;
        let loss = adv_loss_discriminator(&mut tape, d_real, d_fake)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite {
                iteration,
                components: format!("L(D) = {value}"),
            });
        }
        let mut grads = tape.backward(loss)?;
        let adam = st.config.adam(0.0);
        for ((p, v), s) in st
            .discriminator
            .learnable_mut()
            .into_iter()
            .zip(&dv.params)
            .zip(&mut st.disc_adam)
        {
            let grad = grads.take(*v).expect("discriminator leaf on tape");
            adam_step(p, &grad, s, &adam);
        }
        Ok(value)
    }

    /// Clipped, weight-decayed Adam step on the generator objective with the
    /// discriminator held constant. `loss_d` only feeds the diagnostic of a
    /// non-finite loss.
    pub fn generator_step(&mut self, pair: &PatchPair, iteration: usize, loss_d: f64) -> Result<GeneratorLosses> {
        let st = &mut self.state;
        let cfg = &st.config;
        let mut tape = Tape::new();
        let g = st.generator.forward(&mut tape, true)?;
        let dv = st.discriminator.register(&mut tape, false);
        let (d_real, d_fake) =
            discriminate_pair(&mut tape, &mut st.discriminator, &dv, g.profile, pair, st.scale, false)?;
        let adv = adv_loss_generator(&mut tape, d_real, d_fake)?;
        let lc = centroid_loss(&mut tape, g.profile)?;
        let lb = boundary_loss(&mut tape, g.profile)?;
        let wc = tape.affine(lc, cfg.lambda_centroid, 0.0);
        let wb = tape.affine(lb, cfg.lambda_boundary, 0.0);
        let total = tape.add(adv, wc)?;
        let total = tape.add(total, wb)?;
        let [adv_v, lc_v, lb_v, total_v] = [adv, lc, lb, total].map(|v| tape.value(v).item());
        if ![adv_v, lc_v, lb_v, total_v].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                iteration,
                components: format!("L(D) = {loss_d}, L_adv = {adv_v}, L_c = {lc_v}, L_b = {lb_v}, total = {total_v}"),
            });
        }
        let mut grads = tape.backward(total)?;
        let mut g_grads: Vec<Tensor> = g
            .params
            .iter()
            .map(|v| grads.take(*v).expect("generator leaf on tape"))
            .collect();
        clip_grad_norm(&mut g_grads, cfg.clip_norm);
        let adam = cfg.adam(cfg.weight_decay);
        for ((p, grad), s) in st
            .generator
            .learnable_mut()
            .into_iter()
            .zip(&g_grads)
            .zip(&mut st.gen_adam)
        {
            adam_step(p, grad, s, &adam);
        }
        Ok(GeneratorLosses {
            adv: adv_v,
            centroid: lc_v,
            boundary: lb_v,
            total: total_v,
        })
    }
}

/// Two independent patch batches `[B, R, C]` with one downsampling phase per
/// patch.
#[derive(Clone, Debug)]
pub struct PatchPair {
    pub first: (Tensor, Vec<usize>),
    pub second: (Tensor, Vec<usize>),
}

/// Generator loss terms of one step, before weighting except `total`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorLosses {
    pub adv: f64,
    pub centroid: f64,
    pub boundary: f64,
    pub total: f64,
}

/// Degrades both batches with the profile and scores them in one
/// discriminator pass: `D(G(I₁)ᵀ)` and `D(G(I₂))`.
#[allow(clippy::too_many_arguments)]
fn discriminate_pair(
    tape: &mut Tape,
    d: &mut DiscriminatorParams,
    dv: &crate::gan::DiscriminatorVars,
    profile: Var,
    pair: &PatchPair,
    scale: usize,
    persist_u: bool,
) -> Result<(Var, Var)> {
    let (first, second) = (&pair.first, &pair.second);
    let b = first.1.len();
    let x1 = tape.constant(first.0.clone());
    let x2 = tape.constant(second.0.clone());
    let g1 = degrade_batch(tape, x1, profile, scale, &first.1)?;
    let real = tape.transpose_last2(g1)?;
    let fake = degrade_batch(tape, x2, profile, scale, &second.1)?;
    let both = tape.concat(&[real, fake])?;
    let out = d.forward(tape, dv, both, persist_u)?;
    Ok((tape.narrow(out, 0, b)?, tape.narrow(out, b, b)?))
}

/// Trains from scratch and returns the EMA profile and the loss history.
pub fn train(
    volume: &Volume,
    config: &TrainConfig,
    progress: &mut dyn FnMut(&HistoryEntry),
) -> Result<(Profile, Vec<HistoryEntry>)> {
    let mut trainer = Trainer::new(volume, config)?;
    trainer.run_to(config.iterations, progress)?;
    let state = trainer.into_state();
    Ok((state.ema, state.history))
}

// ---- checkpoints ----

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    out.write_u32::<LE>(t.shape().len() as u32).unwrap();
    for &d in t.shape() {
        out.write_u64::<LE>(d as u64).unwrap();
    }
    for &v in t.data() {
        out.write_f64::<LE>(v).unwrap();
    }
}

fn put_adam(out: &mut Vec<u8>, states: &[AdamState]) {
    out.write_u64::<LE>(states.len() as u64).unwrap();
    for s in states {
        put_tensor(out, &s.m);
        put_tensor(out, &s.v);
        out.write_u64::<LE>(s.t).unwrap();
    }
}

/// Writes `state` as a versioned, checksummed little-endian file.
pub fn checkpoint_save(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LE>(CHECKPOINT_VERSION).unwrap();
    let config = serde_json::to_vec(&state.config)?;
    out.write_u64::<LE>(config.len() as u64).unwrap();
    out.extend_from_slice(&config);
    out.write_u64::<LE>(state.scale as u64).unwrap();
    out.write_f64::<LE>(state.spacing_mm).unwrap();
    out.write_u64::<LE>(state.iteration as u64).unwrap();

    out.extend_from_slice(&state.rng.get_seed());
    out.write_u64::<LE>(state.rng.get_stream()).unwrap();
    out.write_u128::<LE>(state.rng.get_word_pos()).unwrap();

    let g = &state.generator;
    put_tensor(&mut out, &g.seed);
    out.write_u64::<LE>(g.weights.len() as u64).unwrap();
    for (w, b) in g.weights.iter().zip(&g.biases) {
        put_tensor(&mut out, w);
        put_tensor(&mut out, b);
    }

    let d = &state.discriminator;
    out.write_u64::<LE>(d.power_iters as u64).unwrap();
    out.write_u64::<LE>(d.layers.len() as u64).unwrap();
    for l in &d.layers {
        put_tensor(&mut out, &l.weight);
        put_tensor(&mut out, &l.bias);
        put_tensor(&mut out, &l.u);
    }
    put_adam(&mut out, &state.gen_adam);
    put_adam(&mut out, &state.disc_adam);

    out.write_f64::<LE>(state.ema.spacing_mm()).unwrap();
    put_tensor(&mut out, &Tensor::from_vec(state.ema.taps().to_vec()));

    out.write_u64::<LE>(state.history.len() as u64).unwrap();
    for h in &state.history {
        out.write_u64::<LE>(h.iteration as u64).unwrap();
        for v in [
            h.loss_d,
            h.loss_adv,
            h.loss_centroid,
            h.loss_boundary,
            h.loss_total,
            h.fwhm_mm,
        ] {
            out.write_f64::<LE>(v).unwrap();
        }
    }
    let crc = crc32fast::hash(&out);
    out.write_u32::<LE>(crc).unwrap();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
    path: &'a Path,
}

impl Reader<'_> {
    fn corrupt(&self, detail: impl Into<String>) -> Error {
        Error::Corrupt {
            path: self.path.to_path_buf(),
            detail: detail.into(),
        }
    }

    fn short(&self) -> Error {
        self.corrupt("checkpoint ends early")
    }

    fn u64(&mut self) -> Result<u64> {
        self.cur.read_u64::<LE>().map_err(|_| self.short())
    }

    fn len(&mut self, limit: usize) -> Result<usize> {
        let n = self.u64()?;
        if n > limit as u64 {
            return Err(self.corrupt(format!("implausible count {n}")));
        }
        Ok(n as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        self.cur.read_f64::<LE>().map_err(|_| self.short())
    }

    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.cur.read_exact(&mut buf).map_err(|_| self.short())?;
        Ok(buf)
    }

    fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let ndim = self.cur.read_u32::<LE>().map_err(|_| self.short())? as usize;
        if ndim == 0 || ndim > 8 {
            return Err(self.corrupt(format!("tensor with {ndim} axes")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.len(self.remaining())?);
        }
        let n: usize = shape.iter().product();
        if n > self.remaining() / 8 {
            return Err(self.short());
        }
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::new(&shape, data).map_err(|e| self.corrupt(e.to_string()))
    }

    fn adam(&mut self) -> Result<Vec<AdamState>> {
        let n = self.len(self.remaining())?;
        (0..n)
            .map(|_| {
                Ok(AdamState {
                    m: self.tensor()?,
                    v: self.tensor()?,
                    t: self.u64()?,
                })
            })
            .collect()
    }
}

/// Reads a checkpoint written by [`checkpoint_save`].
pub fn checkpoint_load(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: "not a training checkpoint".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Incompatible(format!(
            "{} has checkpoint version {version}; this build reads version {CHECKPOINT_VERSION}",
            path.display()
        )));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            detail: "checksum mismatch".into(),
        });
    }
    let mut r = Reader {
        cur: Cursor::new(&body[12..]),
        path,
    };
    let n = r.len(r.remaining())?;
    let config: TrainConfig = serde_json::from_slice(&r.bytes(n)?).map_err(|e| r.corrupt(e.to_string()))?;
    let scale = r.u64()? as usize;
    let spacing_mm = r.f64()?;
    let iteration = r.u64()? as usize;

    let seed: [u8; 32] = r.bytes(32)?.try_into().unwrap();
    let stream = r.u64()?;
    let word_pos = r.cur.read_u128::<LE>().map_err(|_| r.short())?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);

    let g_seed = r.tensor()?;
    let layers = r.len(r.remaining())?;
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    for _ in 0..layers {
        weights.push(r.tensor()?);
        biases.push(r.tensor()?);
    }
    let generator = GeneratorParams {
        seed: g_seed,
        weights,
        biases,
    };

    let power_iters = r.u64()? as usize;
    let layers = r.len(r.remaining())?;
    let layers = (0..layers)
        .map(|_| {
            Ok(SnConv {
                weight: r.tensor()?,
                bias: r.tensor()?,
                u: r.tensor()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let discriminator = DiscriminatorParams { layers, power_iters };
    let gen_adam = r.adam()?;
    let disc_adam = r.adam()?;

    let ema_spacing = r.f64()?;
    let ema = Profile::new(r.tensor()?.into_data(), ema_spacing).map_err(|e| r.corrupt(e.to_string()))?;

    let n = r.len(r.remaining() / 56)?;
    let mut history = Vec::with_capacity(n);
    for _ in 0..n {
        let iteration = r.u64()? as usize;
        let mut v = [0.0; 6];
        for x in &mut v {
            *x = r.f64()?;
        }
        history.push(HistoryEntry {
            iteration,
            loss_d: v[0],
            loss_adv: v[1],
            loss_centroid: v[2],
            loss_boundary: v[3],
            loss_total: v[4],
            fwhm_mm: v[5],
        });
    }
    if r.remaining() != 0 {
        return Err(r.corrupt(format!("{} trailing bytes", r.remaining())));
    }
    if gen_adam.len() != generator.learnable().len() || disc_adam.len() != discriminator.learnable().len() {
        return Err(r.corrupt("optimizer state does not match the parameter count"));
    }
    Ok(TrainState {
        config,
        scale,
        spacing_mm,
        iteration,
        generator,
        discriminator,
        gen_adam,
        disc_adam,
        ema,
        history,
        rng,
    })
}

/// Resumes from `path` when it exists, otherwise starts fresh; the stored
/// configuration must match `config` apart from the iteration count.
pub fn trainer_from_checkpoint(volume: &Volume, config: &TrainConfig, path: &Path) -> Result<Trainer> {
    if !path.exists() {
        return Trainer::new(volume, config);
    }
    let mut state = checkpoint_load(path)?;
    let scale = resolve_scale(volume, config.scale)?;
    if !state.config.resumable_as(config) || state.scale != scale {
        return Err(Error::Incompatible(format!(
            "{} was written with a different training configuration",
            path.display()
        )));
    }
    state.config.iterations = config.iterations;
    state.config.report_every = config.report_every;
    Trainer::with_state(volume, state)
}
