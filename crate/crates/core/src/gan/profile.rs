//! Discrete 1D kernels and their JSON / CSV forms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of the tap sum from one.
pub const UNIT_SUM_TOLERANCE: f64 = 1e-9;

/// Nonnegative, unit-sum kernel with an odd number of taps, sampled every
/// `spacing_mm`. The centre tap sits at index `(K - 1) / 2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Profile {
    spacing_mm: f64,
    taps: Vec<f64>,
}

#[derive(Deserialize)]
struct RawProfile {
    spacing_mm: f64,
    taps: Vec<f64>,
}

impl Profile {
    pub fn new(taps: Vec<f64>, spacing_mm: f64) -> Result<Self> {
        if taps.is_empty() || taps.len() % 2 == 0 {
            return Err(Error::Argument(format!(
                "profile needs an odd number of taps, got {}",
                taps.len()
            )));
        }
        if !(spacing_mm > 0.0 && spacing_mm.is_finite()) {
            return Err(Error::Argument(format!(
                "profile spacing must be positive, got {spacing_mm}"
            )));
        }
        if let Some(bad) = taps.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::Argument(format!("profile tap {bad} is negative or not finite")));
        }
        let sum: f64 = taps.iter().sum();
        if (sum - 1.0).abs() > UNIT_SUM_TOLERANCE {
            return Err(Error::Argument(format!("profile taps sum to {sum}, not 1")));
        }
        Ok(Self { spacing_mm, taps })
    }

    /// Divides by the tap sum before validating.
    pub fn normalized(mut taps: Vec<f64>, spacing_mm: f64) -> Result<Self> {
        let sum: f64 = taps.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::Argument(format!("cannot normalize taps summing to {sum}")));
        }
        taps.iter_mut().for_each(|t| *t /= sum);
        Self::new(taps, spacing_mm)
    }

    pub fn impulse(len: usize, spacing_mm: f64) -> Result<Self> {
        let mut taps = vec![0.0; len];
        if len > 0 {
            taps[len / 2] = 1.0;
        }
        Self::new(taps, spacing_mm)
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn spacing_mm(&self) -> f64 {
        self.spacing_mm
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn center(&self) -> usize {
        self.taps.len() / 2
    }

    /// `Σ i·k_i`, in tap units.
    pub fn centroid(&self) -> f64 {
        self.taps.iter().enumerate().map(|(i, t)| i as f64 * t).sum()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &t) in self.taps.iter().enumerate() {
            if t > self.taps[best] {
                best = i;
            }
        }
        best
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawProfile = serde_json::from_str(text)?;
        Self::new(raw.taps, raw.spacing_mm)
    }

    /// Two columns, `offset_mm,weight`, offsets relative to the centre tap.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("offset_mm,weight\n");
        let c = self.center() as f64;
        for (i, t) in self.taps.iter().enumerate() {
            writeln!(out, "{},{}", (i as f64 - c) * self.spacing_mm, t).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().unwrap_or_default();
        if header.trim() != "offset_mm,weight" {
            return Err(Error::Argument(format!("unexpected profile CSV header {header:?}")));
        }
        let mut offsets = Vec::new();
        let mut taps = Vec::new();
        for line in lines {
            let (o, w) = line
                .split_once(',')
                .ok_or_else(|| Error::Argument(format!("malformed profile CSV line {line:?}")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Argument(format!("bad number {s:?}: {e}")))
            };
            offsets.push(parse(o)?);
            taps.push(parse(w)?);
        }
        if taps.len() < 3 || taps.len() % 2 == 0 {
            return Err(Error::Argument(format!(
                "profile CSV has {} rows; need an odd count ≥ 3",
                taps.len()
            )));
        }
        // the row after the centre carries exactly one spacing
        let spacing = offsets[taps.len() / 2 + 1];
        Self::new(taps, spacing)
    }

    /// Writes JSON, or CSV when the extension is `.csv`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = if is_csv(path) { self.to_csv() } else { self.to_json() };
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if is_csv(path) {
            Self::from_csv(&text)
        } else {
            Self::from_json(&text)
        }
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// `beta·kbar + (1 - beta)·k`, renormalized to unit sum.
pub fn ema_update(kbar: &Profile, k: &Profile, beta: f64) -> Result<Profile> {
    if kbar.len() != k.len() {
        return Err(Error::Argument(format!(
            "EMA of profiles with {} and {} taps",
            kbar.len(),
            k.len()
        )));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Argument(format!("EMA beta must lie in [0, 1), got {beta}")));
    }
    let taps = kbar
        .taps
        .iter()
        .zip(&k.taps)
        .map(|(a, b)| beta * a + (1.0 - beta) * b)
        .collect();
    Profile::normalized(taps, k.spacing_mm)
}
